"""Command-line interface.

Subcommands: convert, stream, bench, init-weights, sparsify, loss-eval,
metrics. A TOML file given with --config supplies per-subcommand defaults
(table name = subcommand name, keys = long flag names); explicit flags win
over the file.

Exit codes: 0 success, 2 bad input (missing/invalid files or arguments),
3 bad weight container, 4 real-time overrun under --strict-rt.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import config as cfgmod
from . import container as cont
from . import engine, losses, metrics
from .dsp import io as vio
from .dsp.mel import MelAnalyzer
from .dsp.stft import stft as offline_stft
from .spectral import SpectralModel
from .vocoder import Vocoder

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_BAD_CONTAINER = 3
EXIT_OVERRUN = 4


class InputError(Exception):
    pass


def _load_container(path) -> cont.WeightContainer:
    try:
        return cont.WeightContainer.load(path)
    except FileNotFoundError:
        raise InputError(f"weights file not found: {path}") from None


def _read_audio(path, expect_rate: int) -> np.ndarray:
    try:
        rate, x = vio.read_wav(path)
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None
    if rate != expect_rate:
        raise InputError(f"{path}: sample rate {rate} != model rate {expect_rate}")
    return x


def _read_track(path, audio):
    """WAV or feature-file input -> (samples | None, log-mel)."""
    try:
        with open(path, "rb") as f:
            magic = f.read(4)
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None
    if magic == vio.FEATURE_MAGIC:
        try:
            mel = vio.read_features(path)
        except vio.FeatureFileError as e:
            raise InputError(f"{path}: {e}") from None
        if mel.shape[1] != audio.n_mels:
            raise InputError(f"{path}: feature dim {mel.shape[1]} != n_mels {audio.n_mels}")
        return None, mel
    x = _read_audio(path, audio.sample_rate)
    return x, _mel_of(x, audio)


def _mel_of(x: np.ndarray, audio) -> np.ndarray:
    an = MelAnalyzer(audio.n_mels, audio.n_fft, audio.sample_rate, audio.fmin, audio.fmax)
    return an.log_mel(np.abs(offline_stft(x, audio.win_length, audio.hop_length, audio.n_fft)))


def _density_triple(text: str) -> tuple:
    parts = [float(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise InputError("densities must be three comma-separated fractions (reset,update,new)")
    return tuple(parts)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _emit(report: dict, path=None, quiet=False) -> None:
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    if not quiet and not path:
        print(text)


def _emit_flat(report: dict, path=None, quiet=False) -> None:
    """key=value lines on stdout; JSON document at `path` when given."""
    if path:
        with open(path, "w") as f:
            f.write(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    if not quiet:
        for key in sorted(report):
            v = report[key]
            print(f"{key}={v:.10g}" if isinstance(v, float) else f"{key}={v}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_convert(args) -> int:
    c = _load_container(args.weights)
    x = _read_audio(args.inp, c.config.audio.sample_rate)
    session = engine.ConversionSession(c, target=args.target_speaker, seed=args.seed,
                                       sample_latents=args.sample_latents)
    y = session.convert(x)
    vio.write_wav(args.out, c.config.audio.sample_rate, y)
    if not args.quiet:
        _emit(session.report().as_dict())
    return EXIT_OK


def cmd_stream(args) -> int:
    c = _load_container(args.weights)
    sr = c.config.audio.sample_rate
    if args.inp:
        try:
            with open(args.inp, "rb") as f:
                raw = f.read()
        except FileNotFoundError:
            raise InputError(f"input file not found: {args.inp}") from None
    else:
        raw = sys.stdin.buffer.read()
    try:
        x = vio.pcm16_to_float(raw)
    except ValueError as e:
        raise InputError(str(e)) from None
    chunk = int(round(args.chunk_ms / 1000.0 * sr))
    if chunk <= 0:
        raise InputError("--chunk-ms must be positive")
    y, report = engine.stream_convert(c, x, target=args.target_speaker, chunk=chunk,
                                      seed=args.seed, sample_latents=args.sample_latents)
    pcm = vio.float_to_pcm16(y)
    if args.out:
        with open(args.out, "wb") as f:
            f.write(pcm)
    else:
        sys.stdout.buffer.write(pcm)
        sys.stdout.buffer.flush()
    if args.report:
        _emit(report.as_dict(), args.report)
    if args.strict_rt and report.overrun_frames > 0:
        print(f"real-time overrun on {report.overrun_frames} chunks", file=sys.stderr)
        return EXIT_OVERRUN
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.weights:
        c = _load_container(args.weights)
    else:
        c = cont.init_random(cfgmod.preset(args.preset), seed=args.seed)
    report = engine.bench(c, seconds=args.seconds, target=args.target_speaker,
                          seed=args.seed)
    _emit(report.as_dict(), args.out, args.quiet)
    if args.out and not args.quiet:
        _emit(report.as_dict())
    return EXIT_OK


def cmd_init_weights(args) -> int:
    cfg = cfgmod.preset(args.preset)
    if args.pretrain:
        cfg = cfgmod.with_fine_tuning(cfg, False)
    c = cont.init_random(cfg, seed=args.seed, sparse=not args.dense)
    c.save(args.out)
    if not args.quiet:
        print(f"wrote {args.out}: preset={args.preset} tensors={len(c.names())}")
    return EXIT_OK


def cmd_sparsify(args) -> int:
    c = _load_container(args.inp)
    base = _density_triple(args.densities) if args.densities else None
    spec = _density_triple(args.spectral_densities) if args.spectral_densities else base
    voc = _density_triple(args.vocoder_densities) if args.vocoder_densities else base
    if spec is None and voc is None:
        raise InputError("nothing to do: give --densities (or a scoped variant)")
    out = cont.sparsify_container(c, spectral_density=spec, vocoder_density=voc)
    out.save(args.out)
    if not args.quiet:
        for name in cont.SPARSE_SPECTRAL + cont.SPARSE_VOCODER:
            if out.has(name):
                d = cont.gate_densities(out.sparse(name))
                print(f"{name}: reset={d[0]:.4f} update={d[1]:.4f} "
                      f"new={d[2]:.4f} combined={d[3]:.4f}")
    return EXIT_OK


def cmd_loss_eval(args) -> int:
    c = _load_container(args.weights)
    audio = c.config.audio
    model = SpectralModel(c)
    ref_x, ref_mel = _read_track(args.ref, audio)
    gen_x, gen_mel = _read_track(args.gen, audio)

    report = {}
    uv = lf0 = None
    if model.exc is not None and ref_x is not None:
        f0, voiced = metrics.f0_track(ref_x, audio.sample_rate)
        n = min(len(f0), ref_mel.shape[0])
        uv = voiced[:n].astype(float)
        lf0 = np.where(voiced[:n], np.log(np.maximum(f0[:n], 1.0)), 0.0)
        report.update(losses.elbo_report(model, ref_mel[:n], args.source_speaker,
                                         args.target_speaker, seed=args.seed,
                                         uv=uv, lf0=lf0).as_dict())
    else:
        report.update(losses.elbo_report(model, ref_mel, args.source_speaker,
                                         args.target_speaker, seed=args.seed).as_dict())

    n = min(ref_mel.shape[0], gen_mel.shape[0])
    if n >= 1 and ref_x is not None:
        mag_ref = np.abs(offline_stft(ref_x, audio.win_length, audio.hop_length,
                                      audio.n_fft))
        an = MelAnalyzer(audio.n_mels, audio.n_fft, audio.sample_rate,
                         audio.fmin, audio.fmax)
        report["fullres_magnitude"] = losses.fullres_magnitude_loss(
            gen_mel[:n], mag_ref[:n], an)
    if ref_x is not None:
        voc = Vocoder(c)
        report.update(losses.vocoder_report(voc, ref_mel, ref_x,
                                            c.config.steps_per_frame))
        acts_ref = _teacher_acts(voc, ref_mel[:n], ref_x, c.config.steps_per_frame)
        acts_gen = _teacher_acts(voc, gen_mel[:n], ref_x, c.config.steps_per_frame)
        report["layerwise"] = losses.layerwise_loss(acts_gen, acts_ref)
        if gen_x is not None:
            report["gen_ref_stft"] = losses.stft_loss(gen_x, ref_x)
    _emit_flat(report, args.out, args.quiet)
    return EXIT_OK


def _teacher_acts(voc, mel, x, steps_per_frame):
    """Teacher-forced layer activations of the vocoder conditioned on `mel`,
    with target bins taken from the waveform `x`."""
    from .dsp.pqmf import PqmfBank
    from .dsp import mulaw
    bank = PqmfBank(voc.n_bands, taps=voc.config.vocoder.taps())
    bands = bank.analyze(x)
    cond = voc.condition(mel)
    steps = min(bands.shape[0], cond.shape[0] * steps_per_frame)
    frames = steps // steps_per_frame
    steps = frames * steps_per_frame
    bins = mulaw.encode(np.clip(bands[:steps], -1.0, 1.0), voc.n_bins)
    return voc.layer_activations(cond[:frames], bins, steps_per_frame)


def cmd_metrics(args) -> int:
    audio = cfgmod.AudioConfig()
    if args.weights:
        audio = _load_container(args.weights).config.audio
    ref_x, mel_ref = _read_track(args.ref, audio)
    gen_x, mel_gen = _read_track(args.gen, audio)
    n = min(mel_ref.shape[0], mel_gen.shape[0])
    if n < 2:
        raise InputError("signals too short to compare")
    report = {
        "mcd_db": metrics.mcd_from_log_mel(mel_gen[:n], mel_ref[:n]),
        "lgd": metrics.lgd(mel_gen[:n], mel_ref[:n]),
    }
    if ref_x is not None and gen_x is not None:
        f0r, vr = metrics.f0_track(ref_x, audio.sample_rate)
        f0g, vg = metrics.f0_track(gen_x, audio.sample_rate)
        report.update(metrics.f0_metrics(f0g, vg, f0r, vr))
    _emit(report, args.out, args.quiet)
    if args.out and not args.quiet:
        _emit(report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / dispatch


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vcstream",
                                description="streaming voice conversion runtime")
    p.add_argument("--config", help="TOML file with per-subcommand defaults")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(fn=fn)
        sp.add_argument("--quiet", action="store_true")
        return sp

    def speaker(sp, flag="--target-speaker", required=True):
        sp.add_argument(flag, type=int, required=required, default=None if required else 0)

    sp = add("convert", cmd_convert, help="convert a WAV offline")
    sp.add_argument("--in", dest="inp", required=True, metavar="A.WAV")
    sp.add_argument("--out", required=True, metavar="B.WAV")
    sp.add_argument("--weights", required=True, metavar="M.MWVC")
    speaker(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample-latents", action="store_true",
                    help="sample the latent codes instead of using their means")

    sp = add("stream", cmd_stream,
             help="convert raw 16-bit PCM on stdin/stdout in real-time chunks")
    sp.add_argument("--in", dest="inp", metavar="PCM",
                    help="raw PCM file instead of standard input")
    sp.add_argument("--out", metavar="PCM",
                    help="raw PCM file instead of standard output")
    sp.add_argument("--weights", required=True, metavar="M.MWVC")
    speaker(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample-latents", action="store_true")
    sp.add_argument("--report", metavar="LATENCY.JSON",
                    help="write the latency/RTF report here")
    sp.add_argument("--chunk-ms", type=float, default=10.0)
    sp.add_argument("--strict-rt", action="store_true",
                    help="exit 4 if any chunk misses its deadline")

    sp = add("bench", cmd_bench, help="measure RTF on synthetic input")
    sp.add_argument("--seconds", type=float, default=10.0)
    sp.add_argument("--preset", default="paper-scale", choices=sorted(cfgmod.PRESETS))
    sp.add_argument("--weights", help="bench this container instead of preset weights")
    speaker(sp, required=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", metavar="REPORT.JSON")

    sp = add("init-weights", cmd_init_weights, help="write a random weight container")
    sp.add_argument("--preset", default="paper-scale", choices=sorted(cfgmod.PRESETS))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, metavar="M.MWVC")
    sp.add_argument("--dense", action="store_true", help="skip recurrent pruning")
    sp.add_argument("--pretrain", action="store_true",
                    help="keep the excitation decoder (pre-fine-tuning layout)")

    sp = add("sparsify", cmd_sparsify, help="re-prune recurrent kernels")
    sp.add_argument("--in", dest="inp", required=True, metavar="DENSE.MWVC")
    sp.add_argument("--densities", metavar="R,Z,N",
                    help="per-gate kept fractions for every recurrent kernel")
    sp.add_argument("--spectral-densities", metavar="R,Z,N",
                    help="override for the conversion-model kernels")
    sp.add_argument("--vocoder-densities", metavar="R,Z,N",
                    help="override for the vocoder kernel")
    sp.add_argument("--out", required=True, metavar="SPARSE.MWVC")

    sp = add("loss-eval", cmd_loss_eval,
             help="evaluate every objective term on a (generated, reference) pair")
    sp.add_argument("--gen", required=True, metavar="GEN.WAV")
    sp.add_argument("--ref", required=True, metavar="REF.WAV")
    sp.add_argument("--weights", required=True, metavar="M.MWVC")
    sp.add_argument("--out", metavar="REPORT.JSON")
    sp.add_argument("--source-speaker", type=int, default=0)
    speaker(sp, required=False)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("metrics", cmd_metrics, help="objective metrics between two tracks")
    sp.add_argument("--gen", required=True, metavar="GEN.WAV")
    sp.add_argument("--ref", required=True, metavar="REF.WAV")
    sp.add_argument("--out", metavar="REPORT.JSON")
    sp.add_argument("--weights", help="take the analysis settings from this container")

    return p


def _apply_config_file(argv: list, parser: argparse.ArgumentParser) -> list:
    """Merge TOML defaults: values become parser defaults so explicit flags
    still win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        parser.error("--config needs a path")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise InputError(f"{path}: {e}") from None
    rest = argv[:i] + argv[i + 2:]
    if not rest:
        return argv
    command = rest[0]
    table = data.get(command, {})
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction) and command in action.choices:
            spar = action.choices[command]
            # map long flag names (as they appear in TOML keys) to dests
            keymap = {}
            for a in spar._actions:
                for opt in a.option_strings:
                    if opt.startswith("--"):
                        keymap[opt[2:].replace("-", "_")] = a.dest
            flat = {}
            bad = []
            for k, v in table.items():
                dest = keymap.get(k.replace("-", "_"))
                if dest is None:
                    bad.append(k)
                else:
                    flat[dest] = v
            if bad:
                raise InputError(f"unknown keys in [{command}]: {sorted(bad)}")
            spar.set_defaults(**flat)
            for a in spar._actions:
                if a.dest in flat and a.required:
                    a.required = False
    return rest


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(argv, parser)
        args = parser.parse_args(argv)
        return args.fn(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except cont.ContainerError as e:
        print(f"container error: {e}", file=sys.stderr)
        return EXIT_BAD_CONTAINER
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
