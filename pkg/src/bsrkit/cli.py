"""Command-line surface: gen, train, solve, preprocess, eval.

Every command reads a JSON config (strict schema: unknown keys are
rejected) and/or flags, writes its artifacts into an output directory,
and always emits the fully-resolved configuration next to the results so
runs are reproducible from the artifacts alone.

Exit codes: 0 success, 2 config/schema error, 3 numerical abort (loss no
longer finite), 4 I/O error.
"""

import argparse
import csv
import glob
import os
import sys

from . import __version__
from .fileio import DataFormatError
from .train import TrainingDiverged


class ConfigError(Exception):
    """Invalid configuration or schema violation."""


# ---------------------------------------------------------------------------
# config schemas

def _num(x):
    return float(x)


def _int(x):
    if float(x) != int(float(x)):
        raise ValueError("expected an integer")
    return int(float(x))


def _float_list(x):
    return [float(v) for v in x]


def _pair(x):
    vals = [float(v) for v in x]
    if len(vals) != 2:
        raise ValueError("expected a pair")
    return tuple(vals)


GAUSSIAN_SCHEMA = {
    "schema_version": (_int, 1),
    "n_r": (_int, 32),
    "n_meas": (_int, 32),
    "n_d": (_int, 128),
    "n_b": (_int, 150),
    "pnz": (_num, 0.1),
    "snr_db": (_num, 20.0),
    "seed": (_int, 0),
    "n_test": (_int, 250),
}

PSF_SCHEMA = {
    "diffusivity": (_num, 0.1),
    "evaluation_time": (_num, 0.5),
    "pulse_length": (_num, 0.2),
    "amplitude": (_num, 1.0),
    "kernel_radius": (_int, 24),
}

THERMAL_SCHEMA = {
    "schema_version": (_int, 1),
    "n_r": (_int, 1280),
    "n_meas": (_int, 150),
    "n_b": (_int, 150),
    "defect_width": (_num, 1.0),
    "defect_pnz": (_num, 0.01),
    "absorption_levels": (_pair, (0.0, 1.0)),
    "line_width": (_num, 0.8),
    "illum_pnz": (_num, 0.01),
    "snr_db": (_num, 8.0),
    "pixel_pitch": (_num, 0.05),
    "psf": (None, None),          # nested, validated against PSF_SCHEMA
    "seed": (_int, 0),
    "n_test": (_int, 250),
}

TRAIN_SCHEMA = {
    "schema_version": (_int, 1),
    "n_layers": (_int, 6),
    "gamma": (lambda x: None if x is None else float(x), None),
    "lambda0": (_num, 4e-3),
    "train_rate": (_num, 1e-3),
    "refinements": (_float_list, [0.5, 0.1, 0.05]),
    "maxiter": (_int, 1000),
    "seed": (lambda x: None if x is None else _int(x), None),
    "n_batch": (lambda x: None if x is None else _int(x), None),
}


def validate_config(raw, schema, context) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}: config must be a JSON object")
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"{context}: unknown key {key!r}")
    for key, (coerce, default) in schema.items():
        if key == "psf":
            out[key] = validate_config(raw.get(key, {}), PSF_SCHEMA,
                                       context + ".psf")
            continue
        if key in raw:
            try:
                out[key] = coerce(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{context}: bad value for {key!r}: {exc}")
        else:
            out[key] = default
    if out.get("schema_version") not in (None, 1):
        raise ConfigError(f"{context}: unsupported schema_version")
    return out


def _load_config(path, schema, context):
    from . import fileio

    if path is None:
        return validate_config({}, schema, context)
    try:
        raw = fileio.read_json(path)
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})")
    return validate_config(raw, schema, context)


def _write_resolved(out_dir, command, resolved, seed=None):
    from . import fileio

    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "tool": {"name": "bsrkit", "version": __version__},
        "command": command,
        "config": resolved,
    }
    if seed is not None:
        doc["seed"] = seed
    fileio.write_json(os.path.join(out_dir, "resolved_config.json"), doc)


def _json_safe(value):
    """Make reports strictly JSON-serializable; nonfinite floats become
    the sentinels "-inf" / "inf" / "nan"."""
    import numpy as np

    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isfinite(v):
            return v
        if np.isnan(v):
            return "nan"
        return "-inf" if v < 0 else "inf"
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args) -> int:
    from . import datagen

    if args.case == "gaussian":
        resolved = _load_config(args.config, GAUSSIAN_SCHEMA, "gen gaussian")
        cfg = datagen.GaussianCaseConfig(
            **{k: v for k, v in resolved.items() if k != "schema_version"})
        ds = datagen.gen_gaussian_problem(cfg)
    else:
        resolved = _load_config(args.config, THERMAL_SCHEMA, "gen thermal")
        kwargs = {k: v for k, v in resolved.items()
                  if k not in ("schema_version", "psf")}
        cfg = datagen.ThermalCaseConfig(
            psf=datagen.ThermalPSFConfig(**resolved["psf"]), **kwargs)
        ds = datagen.gen_thermal_problem(cfg)
    datagen.save_dataset(ds, args.out)
    _write_resolved(args.out, f"gen {args.case}", resolved, seed=resolved["seed"])
    print(f"dataset written to {args.out}")
    return 0


def cmd_train(args) -> int:
    from . import datagen, fileio, lbista
    from .train import TrainConfig, train_layerwise

    ds = datagen.load_dataset(args.data)
    resolved = _load_config(args.config, TRAIN_SCHEMA, "train")
    cfg = TrainConfig(mode=args.mode,
                      **{k: v for k, v in resolved.items()
                         if k != "schema_version"})
    cfg.validate()
    gamma = cfg.gamma
    if gamma is None:
        gamma = 0.5 / ds.model.lipschitz_bound()
    provenance = {"data": os.path.abspath(args.data), "mode": args.mode,
                  "config": dict(resolved, gamma=gamma)}

    os.makedirs(args.out, exist_ok=True)
    params_dir = os.path.join(args.out, "params")
    if args.init_only:
        params = lbista.init_params(ds.model, gamma, cfg.lambda0,
                                    cfg.n_layers, cfg.mode)
        lbista.save_params(params, params_dir,
                           training_provenance=dict(provenance, trained=False))
    else:
        cfg.gamma = gamma
        params, report = train_layerwise((ds.x_train, ds.y_train), ds.model, cfg)
        lbista.save_params(params, params_dir,
                           training_provenance=dict(provenance, trained=True))
        fileio.write_json(os.path.join(args.out, "report.json"),
                          _json_safe(report.to_json_dict()))
        report.loss_curves_csv(os.path.join(args.out, "loss_curves.csv"))
        print(f"final loss {report.final_loss:.6g} "
              f"(initial {report.initial_loss:.6g}), "
              f"lambdas {['%.4g' % v for v in report.final_lambdas]}")
    _write_resolved(args.out, f"train {args.mode}",
                    dict(resolved, gamma=gamma), seed=resolved.get("seed"))
    print(f"params written to {params_dir}")
    return 0


def _load_solve_model(model_path, data_shape, blocks):
    from . import datagen, fileio
    from .linop import ConvKernel, ConvolutionModel, DenseModel

    if os.path.isdir(model_path):
        ds = datagen.load_dataset(model_path)
        model = ds.model
        if isinstance(model, ConvolutionModel) and \
                model.signal_shape != tuple(data_shape):
            model = ConvolutionModel(model.kernel, tuple(data_shape))
        return model
    arr = fileio.load_matrix(model_path)
    if arr.ndim == 1 or (arr.ndim == 2 and 1 in arr.shape):
        return ConvolutionModel(ConvKernel(arr.reshape(-1)), tuple(data_shape))
    if blocks is None:
        raise ConfigError("--blocks is required for a raw dense model file")
    if arr.shape[1] % blocks:
        raise ConfigError("--blocks does not divide the model column count")
    return DenseModel(arr, blocks, arr.shape[1] // blocks)


def _emit_estimate(out_dir, xhat, pixel_pitch=None):
    from . import fileio, metrics

    fileio.write_array(os.path.join(out_dir, "xhat.bsr"), xhat)
    profile = metrics.defect_estimate(xhat)
    fileio.write_csv(os.path.join(out_dir, "defect_profile.csv"), profile)
    metrics.plot_profiles({"estimate": profile},
                          os.path.join(out_dir, "defect_profile.svg"),
                          pixel_pitch=pixel_pitch)


def cmd_solve(args) -> int:
    import numpy as np

    from . import fileio, lbista
    from .bista import bista_solve
    from .metrics import nmse_db

    t = fileio.load_matrix(args.data)
    if t.ndim != 2:
        raise ConfigError("solve expects a 2-D measurement file")
    truth = None if args.truth is None else fileio.load_matrix(args.truth)
    os.makedirs(args.out, exist_ok=True)

    if args.algo == "bista":
        model = _load_solve_model(args.model, t.shape, args.blocks)
        if t.shape != model.data_shape:
            t = t.reshape(model.data_shape)
        xhat, trace = bista_solve(model, t, lam=args.lam, gamma=args.gamma,
                                  n_iter=args.iters, ground_truth=truth)
        trace.to_csv(os.path.join(args.out, "trace.csv"))
        _emit_estimate(args.out, xhat)
        resolved = {"algo": "bista", "lambda": args.lam, "gamma": args.gamma,
                    "iters": args.iters, "model": os.path.abspath(args.model),
                    "data": os.path.abspath(args.data)}
    else:
        params = lbista.load_params(args.params)
        depth = params.n_layers if args.depth is None else args.depth
        outputs, _ = lbista.forward_tape(params, t, depth=depth)
        xhat = outputs[depth][0]
        with open(os.path.join(args.out, "trace.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective", "nmse_db", "seconds"])
            for d in range(depth + 1):
                nm = "" if truth is None else repr(float(nmse_db(outputs[d][0], truth)))
                writer.writerow([d, "", nm, ""])
        _emit_estimate(args.out, xhat)
        resolved = {"algo": "lbista", "params": os.path.abspath(args.params),
                    "depth": depth, "data": os.path.abspath(args.data)}
    if truth is not None:
        resolved["nmse_db"] = _json_safe(nmse_db(xhat, truth))
        print(f"NMSE {resolved['nmse_db']} dB")
    _write_resolved(args.out, f"solve {args.algo}", resolved)
    print(f"estimate written to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    from . import fileio
    from .ingest import (assemble_measurements, load_sequence,
                         maximum_thermogram, select_max_frame, vertical_mean)

    entries = sorted(os.listdir(args.sequences))
    entries = [e for e in entries if not e.endswith(".json")]
    if not entries:
        raise DataFormatError(f"{args.sequences}: no sequence entries found")
    reduced, chosen = [], {}
    for name in entries:
        seq = load_sequence(os.path.join(args.sequences, name))
        profile = vertical_mean(seq)
        chosen[name] = int(select_max_frame(profile))
        reduced.append(maximum_thermogram(profile))
    measurements = assemble_measurements(reduced)
    if str(args.out).endswith(".csv"):
        fileio.write_csv(args.out, measurements)
    else:
        fileio.write_array(args.out, measurements)
    manifest = {
        "schema_version": 1,
        "kind": "measurement-set",
        "strategy": "background-subtracted mean, ties to earliest frame",
        "chosen_frames": chosen,
        "n_meas": measurements.shape[1],
        "n_r": measurements.shape[0],
    }
    fileio.write_json(str(args.out) + ".manifest.json", manifest)
    print(f"measurement set {measurements.shape} written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from . import fileio, metrics

    est = fileio.load_matrix(args.estimate)
    truth = fileio.load_matrix(args.truth)
    if est.shape != truth.shape:
        raise ConfigError("estimate and truth shapes differ")
    os.makedirs(args.out, exist_ok=True)

    def profile_pair(e2d, t2d):
        pe = np.clip(metrics.defect_estimate(e2d), 0.0, None)
        pt = np.clip(metrics.defect_estimate(t2d), 0.0, None)
        return pe, pt

    def safe_w1(pe, pt):
        # Signed estimates can clip to zero mass; the distance is then
        # undefined and reported as null instead of aborting the run.
        if pe.sum() == 0.0 or pt.sum() == 0.0:
            return None
        return metrics.wasserstein1(pe, pt)

    result = {}
    if est.ndim == 3:
        nmses = [metrics.nmse_db(est[i], truth[i]) for i in range(est.shape[0])]
        dists = []
        for i in range(est.shape[0]):
            pe, pt = profile_pair(est[i], truth[i])
            dists.append(safe_w1(pe, pt))
        mean, lo, hi = metrics.ci95(nmses)
        result["nmse_db"] = {"per_instance": nmses, "mean": mean,
                             "ci95": [lo, hi]}
        defined = [d for d in dists if d is not None]
        result["wasserstein"] = {"per_instance": dists}
        if len(defined) >= 2:
            wm, wlo, whi = metrics.ci95(defined)
            result["wasserstein"].update({"mean": wm, "ci95": [wlo, whi]})
        pe, pt = profile_pair(est[0], truth[0])
    else:
        result["nmse_db"] = {"value": metrics.nmse_db(est, truth)}
        pe, pt = profile_pair(est, truth)
        result["wasserstein"] = {"value": safe_w1(pe, pt)}
    result["note"] = ("defect profiles are clipped at zero before the "
                      "transport distance; null when a clipped profile "
                      "has no mass")
    metrics.plot_profiles({"estimate": pe, "truth": pt},
                          os.path.join(args.out, "defect_profiles.svg"))

    if args.curve:
        curve_files = sorted(glob.glob(os.path.join(args.curve, "*.csv")))
        rows = []
        for f in curve_files:
            with open(f, newline="") as fh:
                vals = [float(r["nmse_db"]) for r in csv.DictReader(fh)
                        if r.get("nmse_db")]
            if vals:
                rows.append(vals)
        if len(rows) >= 2:
            n = min(len(r) for r in rows)
            curve = metrics.NmseCurve.from_samples(
                np.array([r[:n] for r in rows]))
            curve.to_csv(os.path.join(args.out, "nmse_curve.csv"))
            metrics.plot_nmse_curves({"solver": curve},
                                     os.path.join(args.out, "nmse_curve.svg"))
            result["curve_files"] = len(rows)

    fileio.write_json(os.path.join(args.out, "metrics.json"), _json_safe(result))
    _write_resolved(args.out, "eval",
                    {"estimate": os.path.abspath(args.estimate),
                     "truth": os.path.abspath(args.truth)})
    print(f"evaluation written to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsrkit",
        description="Block-sparse recovery toolkit: generate, train, solve, "
                    "preprocess, evaluate.")
    parser.add_argument("--version", action="version",
                        version=f"bsrkit {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap numerical worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("case", choices=["gaussian", "thermal"])
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the unrolled network layerwise")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--mode", choices=["tied", "untied"], required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--init-only", action="store_true",
                   help="emit initialized (untrained) params")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="reconstruct from a measurement file")
    p.add_argument("algo", choices=["bista", "lbista"])
    p.add_argument("--data", required=True, help="measurement matrix file")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None, help="ground-truth signal file")
    p.add_argument("--model", default=None,
                   help="bista: kernel/matrix file or dataset dir")
    p.add_argument("--blocks", type=int, default=None,
                   help="block count for a raw dense model file")
    p.add_argument("--lambda", dest="lam", type=float, default=4e-3)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--params", default=None, help="lbista: params directory")
    p.add_argument("--depth", type=int, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("preprocess",
                       help="reduce thermal sequences to a measurement set")
    p.add_argument("--sequences", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("eval", help="evaluate an estimate against ground truth")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--curve", default=None,
                   help="directory of solve trace CSVs to aggregate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        import threadpoolctl

        threadpoolctl.threadpool_limits(args.threads)
    try:
        if args.command == "solve":
            if args.algo == "bista" and args.model is None:
                raise ConfigError("solve bista requires --model")
            if args.algo == "lbista" and args.params is None:
                raise ConfigError("solve lbista requires --params")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
