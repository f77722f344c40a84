"""Command line entry point: ``sqntr train|fuzz|check-grad|idx-info``.

Exit status: 0 on success, 2 for configuration errors, 3 for dataset errors,
4 for numerical failures (including a failing fuzz or gradient check).
"""
import argparse
import csv
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, DatasetError, NonFiniteLoss, NumericalError, TooFewSamples
from .idx import read_idx
from .objective import MlpObjective, QuadraticObjective, Rosenbrock, fd_check
from .testing import fuzz_subproblem
from .trainers import CSV_COLUMNS, TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_NUMERICAL = 4

OUTPUT_ENV = "SQNTR_OUTPUT_DIR"
METRICS_FILE = "metrics.csv"
MANIFEST_FILE = "manifest.json"

_RUN_KEYS = {"objective", "output_dir", "w0"}


def random_spd(dim, cond, seed):
    """Random rotation of eigenvalues spaced log-uniformly on ``[1, cond]``."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    h = (q * np.logspace(0, np.log10(cond), dim)) @ q.T
    return 0.5 * (h + h.T), rng.standard_normal(dim)


class RunSpec:
    """A parsed run configuration: trainer settings plus objective and paths."""

    def __init__(self, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigInvalid("configuration must be a JSON object")
        self.raw = data
        self.base_dir = Path(base_dir)
        cfg_part = {k: v for k, v in data.items() if k not in _RUN_KEYS}
        self.config = TrainConfig.from_dict(cfg_part)
        self.objective_spec = data.get("objective", {"kind": "mlp"})
        if not isinstance(self.objective_spec, dict) or "kind" not in self.objective_spec:
            raise ConfigInvalid("'objective' must be an object with a 'kind'")
        self.output_dir = data.get("output_dir")
        self.w0 = data.get("w0")
        self.checksum = None

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigInvalid(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from exc
        return cls(data, path.parent)

    def _path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def build_objectives(self):
        """Returns ``(train_objective, test_objective_or_None)``."""
        spec = dict(self.objective_spec)
        kind = spec.pop("kind")
        if kind == "mlp":
            allowed = {"train_images", "train_labels", "test_images", "test_labels", "limit", "test_limit", "layers"}
            self._reject_unknown(spec, allowed)
            for key in ("train_images", "train_labels"):
                if key not in spec:
                    raise ConfigInvalid(f"mlp objective needs '{key}'")
            layers = tuple(spec.get("layers", (784, 32, 10)))
            tr = read_idx(self._path(spec["train_images"]), self._path(spec["train_labels"]),
                          limit=spec.get("limit"), n_classes=layers[-1])
            self.checksum = tr.checksum
            train_obj = MlpObjective(tr.flat(), tr.labels, layers)
            test_obj = None
            if "test_images" in spec or "test_labels" in spec:
                te = read_idx(self._path(spec["test_images"]), self._path(spec["test_labels"]),
                              limit=spec.get("test_limit"), n_classes=layers[-1])
                self.checksum = f"{tr.checksum}+{te.checksum}"
                test_obj = MlpObjective(te.flat(), te.labels, layers)
            return train_obj, test_obj
        if kind == "quadratic":
            self._reject_unknown(spec, {"h", "g", "dim", "cond", "seed", "n_samples"})
            if "h" in spec:
                h = np.asarray(spec["h"], dtype=float)
                g = np.asarray(spec.get("g", np.zeros(h.shape[0])), dtype=float)
            else:
                h, g = random_spd(int(spec.get("dim", 20)), float(spec.get("cond", 1e3)), int(spec.get("seed", 0)))
            try:
                return QuadraticObjective(h, g, n_samples=int(spec.get("n_samples", 1))), None
            except ValueError as exc:
                raise ConfigInvalid(str(exc)) from exc
        if kind == "rosenbrock":
            self._reject_unknown(spec, set())
            return Rosenbrock(), None
        raise ConfigInvalid(f"unknown objective kind {kind!r}")

    @staticmethod
    def _reject_unknown(spec, allowed):
        extra = sorted(set(spec) - allowed)
        if extra:
            raise ConfigInvalid(f"unknown objective keys: {', '.join(extra)}")

    def initial_point(self, obj):
        if self.w0 is None:
            return None
        w0 = np.asarray(self.w0, dtype=float)
        if w0.shape != (obj.param_dim,):
            raise ConfigInvalid(f"w0 must have {obj.param_dim} entries")
        return w0

    def resolve_output_dir(self, config_path):
        env = os.environ.get(OUTPUT_ENV)
        if env:
            return Path(env)
        if self.output_dir:
            return self._path(self.output_dir)
        return Path("runs") / Path(config_path).stem


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(path, records):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_COLUMNS)
        for rec in records:
            out.writerow([_fmt(v) for v in rec.row()])


def _train(args):
    spec = RunSpec.load(args.config)
    obj, test_obj = spec.build_objectives()
    w0 = spec.initial_point(obj)
    out_dir = spec.resolve_output_dir(args.config)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / METRICS_FILE
    manifest_path = out_dir / MANIFEST_FILE
    manifest = {
        "config": spec.raw,
        "resolved_config": spec.config.to_dict(),
        "seed": spec.config.seed,
        "dataset_sha256": spec.checksum,
        "started_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": {"metrics": str(metrics_path), "manifest": str(manifest_path)},
    }
    status = EXIT_OK
    try:
        result = train(spec.config, obj, w0=w0, test_obj=test_obj)
        records = result.records
        manifest["stop_reason"] = result.stop_reason
    except NonFiniteLoss as exc:
        records = exc.records
        manifest["stop_reason"] = f"error: {exc}"
        status = EXIT_NUMERICAL
    manifest["iterations"] = len(records)
    write_metrics(metrics_path, records)
    manifest_path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    print(f"{len(records)} iterations, stop: {manifest['stop_reason']}; wrote {metrics_path}")
    return status


def _fuzz(args):
    report = fuzz_subproblem(args.count, args.seed, args.kind, hard_case=args.hard_case)
    print(report.summary())
    for i, msg in report.failures[:10]:
        print(f"  instance {i}: {msg}")
    return EXIT_OK if report.ok else EXIT_NUMERICAL


def _check_grad(args):
    spec = RunSpec.load(args.config)
    obj, _ = spec.build_objectives()
    w0 = spec.initial_point(obj)
    if w0 is None:
        w0 = obj.init_params(spec.config.seed) if hasattr(obj, "init_params") else np.zeros(obj.param_dim)
    # a large sample set makes it likely that some ReLU pre-activation sits
    # within h of zero, where central differences straddle the kink
    indices = np.arange(min(args.samples, obj.n_samples))
    err = fd_check(obj, w0, h=args.h, n_coords=args.coords, seed=spec.config.seed, indices=indices)
    ok = err < args.tol
    print(
        f"max relative gradient error {err:.3e} over {min(args.coords, obj.param_dim)} coordinates"
        f" and {indices.size} samples: {'ok' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_NUMERICAL


def _idx_info(args):
    ds = read_idx(args.images, args.labels)
    counts = np.bincount(ds.labels, minlength=ds.n_classes)
    print(f"samples: {ds.n}")
    print(f"image size: {ds.images.shape[1]}x{ds.images.shape[2]}")
    print("label counts: " + " ".join(f"{c}:{n}" for c, n in enumerate(counts)))
    print(f"sha256: {ds.checksum}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="sqntr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training job from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_train)

    p = sub.add_parser("fuzz", help="compare subproblem solvers against a dense oracle")
    p.add_argument("--kind", choices=("bfgs", "sr1"), required=True)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hard-case", action="store_true", help="construct SR1 hard-case instances")
    p.set_defaults(func=_fuzz)

    p = sub.add_parser("check-grad", help="finite-difference check of the configured objective")
    p.add_argument("--config", required=True)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--coords", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=100, help="check on the first N samples")
    p.set_defaults(func=_check_grad)

    p = sub.add_parser("idx-info", help="summarise an IDX image/label pair")
    p.add_argument("images")
    p.add_argument("labels")
    p.set_defaults(func=_idx_info)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, TooFewSamples) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # e.g. hard-case fuzzing requested for BFGS
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
