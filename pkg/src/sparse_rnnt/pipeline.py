"""End-to-end decoding pipeline: frontend -> segmentation -> encode -> decode."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attention import MaskPolicy
from .encoder import encode, subsampled_length
from .errors import EmptyInputError, ParameterError
from .frontend import (
    FeatureMatrix,
    FrontendConfig,
    Waveform,
    compute_stats,
    log_mel_spectrogram,
    normalize_global,
    read_feature_file,
    read_wav,
)
from .segmentation import Segment, TimedToken, VadConfig, doi_merge, doi_split, epd_split
from .transducer import SrsParams, decode_with_srs

__all__ = ["SegmentationSpec", "DecodeOptions", "DecodeResult", "decode_waveform",
           "decode_features", "decode_file", "parse_policy", "parse_segmentation"]


@dataclass
class SegmentationSpec:
    kind: str = "none"  # none | doi | epd
    doi_length: float | None = None
    overlap: float = 2.0
    vad: VadConfig = field(default_factory=VadConfig)

    def __post_init__(self):
        if self.kind not in ("none", "doi", "epd"):
            raise ParameterError(f"unknown segmentation {self.kind!r}")
        if self.kind == "doi" and (self.doi_length is None or self.doi_length <= 0):
            raise ParameterError("doi segmentation requires a positive length")


@dataclass
class DecodeOptions:
    policy: MaskPolicy = field(default_factory=MaskPolicy.dense)
    beam: int = 4
    srs: SrsParams = field(default_factory=SrsParams)
    segmentation: SegmentationSpec = field(default_factory=SegmentationSpec)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    normalize: bool = True
    max_expansions: int = 5


@dataclass
class DecodeResult:
    text: str
    tokens: list[TimedToken]
    diagnostics: list  # per-segment list of LayerDiagnostics
    log_prob: float


def parse_policy(spec: str, w: int = 40) -> MaskPolicy:
    """Parse 'dense', 'local', or 'local+sgm{1,2,3}' into a mask policy."""
    spec = spec.strip().lower()
    if spec == "dense":
        return MaskPolicy.dense()
    if spec == "local":
        return MaskPolicy.local(w)
    if spec.startswith("local+sgm"):
        fusion = {"1": "sgm1_or", "2": "sgm2_per_head", "3": "sgm3_and"}.get(spec[-1])
        if fusion is None or spec not in ("local+sgm1", "local+sgm2", "local+sgm3"):
            raise ParameterError(f"unknown mask policy {spec!r}")
        return MaskPolicy.local_global(w, fusion)
    raise ParameterError(f"unknown mask policy {spec!r}")


def parse_segmentation(spec: str, overlap: float = 2.0) -> SegmentationSpec:
    """Parse 'none', 'epd', or 'doi:<seconds>'."""
    spec = spec.strip().lower()
    if spec == "none":
        return SegmentationSpec("none")
    if spec == "epd":
        return SegmentationSpec("epd")
    if spec.startswith("doi:"):
        return SegmentationSpec("doi", doi_length=float(spec[4:]), overlap=overlap)
    raise ParameterError(f"unknown segmentation {spec!r}")


def _segments_for(w: Waveform, spec: SegmentationSpec) -> list[Segment]:
    dur = w.duration
    if spec.kind == "none":
        return [Segment(0.0, dur, 0.0, dur)]
    if spec.kind == "doi":
        return doi_split(dur, spec.doi_length, spec.overlap)
    return epd_split(w, spec.vad)


def _features(w: Waveform, opts: DecodeOptions, feat_dim: int) -> FeatureMatrix:
    # the filterbank size must match the model's input dimension
    fe = replace(opts.frontend, num_mels=feat_dim)
    f = log_mel_spectrogram(w, fe)
    if opts.normalize:
        f = normalize_global(f, compute_stats(f))
    return f


def _decode_segment(model, f: FeatureMatrix, offset: float, opts: DecodeOptions):
    enc_out, diags = encode(f, model, opts.policy)
    transcript = decode_with_srs(enc_out, model, opts.beam, opts.srs,
                                 opts.max_expansions)
    tokens = [
        TimedToken(tok, offset + frame * enc_out.frame_rate)
        for tok, frame in zip(transcript.token_ids, transcript.frames)
    ]
    return tokens, diags, transcript.log_prob


def decode_features(model, f: FeatureMatrix, opts: DecodeOptions) -> DecodeResult:
    """Decode a pre-extracted feature matrix (no segmentation)."""
    tokens, diags, lp = _decode_segment(model, f, 0.0, opts)
    text = model.config.vocab.render([t.token_id for t in tokens])
    return DecodeResult(text, tokens, [diags], lp)


def decode_waveform(model, w: Waveform, opts: DecodeOptions) -> DecodeResult:
    """Segment, decode each piece, and merge tokens by core ownership."""
    segments = _segments_for(w, opts.segmentation)
    results = []
    all_diags = []
    total_lp = 0.0
    min_frames = _min_input_frames(model.config.encoder, opts.frontend, w.sample_rate)
    for seg in segments:
        lo = int(round(seg.start * w.sample_rate))
        hi = int(round(seg.end * w.sample_rate))
        piece = Waveform(w.samples[lo:hi], w.sample_rate)
        if len(piece.samples) < min_frames:
            results.append((seg, []))
            continue
        try:
            f = _features(piece, opts, model.config.feat_dim)
            tokens, diags, lp = _decode_segment(model, f, seg.start, opts)
        except EmptyInputError:
            results.append((seg, []))
            continue
        results.append((seg, tokens))
        all_diags.append(diags)
        total_lp += lp
    if opts.segmentation.kind == "doi" and results:
        merged = doi_merge(results)
    else:
        merged = [t for _, toks in sorted(results, key=lambda r: r[0].start)
                  for t in toks]
    text = model.config.vocab.render([t.token_id for t in merged])
    return DecodeResult(text, merged, all_diags, total_lp)


def _min_input_frames(enc_cfg, fe_cfg: FrontendConfig, sample_rate: int) -> int:
    """Smallest sample count yielding at least one encoder output frame."""
    win = int(round(fe_cfg.window * sample_rate))
    hop = int(round(fe_cfg.hop * sample_rate))
    t = 1
    while subsampled_length(t, enc_cfg) < 1:
        t += 1
    return win + (t - 1) * hop


def decode_file(model, path, opts: DecodeOptions) -> DecodeResult:
    """Decode a .wav (with segmentation) or a feature text file (as is)."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return decode_waveform(model, read_wav(path), opts)
    return decode_features(model, read_feature_file(path), opts)
