"""Command-line front end: gen | train | denoise | eval | path.

Configuration is a JSON file whose sections mirror :class:`ExperimentConfig`;
command-line flags override the matching fields. Exit codes: 0 success,
2 validation failure, 3 solver non-convergence (artifacts still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .core import GridSpec, TrainingSet, validate_problem
from .datagen import NoiseSpec, SceneSpec, gen_image_pairs
from .ista import NormGateError
from .learn import LearnConfig, learn_direct, learn_discrete, resolution_sweep
from .mra import ScalingFilter, check_qmf, db4, decompose, haar, lattice_filter, lattice_space, learn_joint, reconstruct
from .paramlearn import LambdaConfig, denoise_lambda, learn_lambdas
from .shrink import MultiPenalty
from .stepreg import StepRegularizer, denoise_all

log = logging.getLogger("steplearn")

EXIT_OK, EXIT_INVALID, EXIT_NOCONV = 0, 2, 3
ROUTES = ("direct", "discrete", "params", "joint")
HELD_OUT_OFFSET = 1_000_003


class ValidationError(Exception):
    pass


@dataclass
class GridConfig:
    m1: int = -1
    m2: int = 2
    n: int = 4
    eps: float | None = None

    def spec(self) -> GridSpec:
        return GridSpec(self.m1, self.m2, self.n, self.eps)


@dataclass
class TransformConfig:
    filter: str | float | None = None   # None/"identity", "haar", "db4" or a lattice angle
    levels: int = 0
    search_thetas: int = 24             # joint route: size of the lattice-angle grid

    def make(self) -> ScalingFilter | None:
        if self.filter in (None, "identity"):
            return None
        if self.filter == "haar":
            return haar()
        if self.filter == "db4":
            return db4()
        return lattice_filter(float(self.filter))


@dataclass
class PenaltyConfig:
    exponents: list = field(default_factory=lambda: [2.0])
    weight: float = 1.0


@dataclass
class PathConfig:
    eps: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    n_coords: int = 16
    k_range: list = field(default_factory=lambda: [0.5, 0.9])
    exponents: list = field(default_factory=lambda: [1.5])


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    scene: dict = field(default_factory=lambda: {"side": 16, "n_squares": 2})
    noise: dict = field(default_factory=lambda: {"kind": "monotone-map", "params": {"shift": 0.1}})
    m: int = 8
    held_out: int = 4
    route: str = "discrete"
    transform: TransformConfig = field(default_factory=TransformConfig)
    learn: LearnConfig = field(default_factory=LearnConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    operator: list | None = None        # diagonal forward operator for denoise
    path: PathConfig = field(default_factory=PathConfig)
    sweep: list | None = None           # dyadic levels for an objective-vs-resolution trajectory
    data: dict | None = None            # inline {"clean": [[...]], "noisy": [[...]]}
    seed: int = 0
    out: str = "run"

    def scene_spec(self, offset: int = 0) -> SceneSpec:
        kw = dict(self.scene)
        for k in ("size_range", "level_range"):
            if k in kw and kw[k] is not None:
                kw[k] = tuple(kw[k])
        return SceneSpec(**{**kw, "seed": self.seed + offset})

    def noise_spec(self, offset: int = 0) -> NoiseSpec:
        return NoiseSpec(self.noise.get("kind", "gaussian"), dict(self.noise.get("params", {})),
                         self.seed + offset)

    def corpus_key(self) -> dict:
        return {"scene": self.scene_spec().to_dict(), "noise": self.noise_spec().to_dict(),
                "m": self.m, "held_out": self.held_out}


_SECTIONS = {"grid": GridConfig, "transform": TransformConfig, "learn": LearnConfig,
             "penalty": PenaltyConfig, "path": PathConfig}


def _build(cls, d, where):
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ValidationError(f"unknown keys in [{where}]: {sorted(extra)}")
    return cls(**d)


def load_config(path=None, overrides=None) -> ExperimentConfig:
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
    kw = {}
    for k, v in raw.items():
        if k in _SECTIONS:
            kw[k] = _build(_SECTIONS[k], v, k)
        else:
            kw[k] = v
    try:
        cfg = _build(ExperimentConfig, kw, "top level")
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg = replace(cfg, **{k: v})
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    if cfg.route not in ROUTES:
        raise ValidationError(f"route must be one of {ROUTES}, got {cfg.route!r}")
    try:
        cfg.grid.spec()
        cfg.scene_spec()
        cfg.noise_spec()
    except (ValueError, TypeError) as exc:
        raise ValidationError(str(exc)) from exc
    filt = cfg.transform.make()
    if filt is not None:
        rep = check_qmf(filt)
        if not rep.ok:
            raise ValidationError(f"filter {filt.label} fails {rep.failed}: {rep.violations}")
    if cfg.m < 1 or cfg.held_out < 0:
        raise ValidationError("need m >= 1 and held_out >= 0")


# -- corpus -------------------------------------------------------------------


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _corpus_dir(cfg) -> Path:
    return Path(cfg.out) / "corpus"


def check_manifest(cdir: Path, key=None):
    """Return ``None`` if the manifest is intact (and matches ``key``), else a reason."""
    mpath = cdir / "manifest.json"
    try:
        man = json.loads(mpath.read_text())
        for rel, digest in man["sha256"].items():
            if _sha(cdir / rel) != digest:
                return f"{rel} does not match its recorded checksum"
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        return f"manifest unreadable: {exc}"
    if key is not None and man.get("config") != key:
        return "manifest was generated from a different configuration"
    return None


def cmd_gen(cfg: ExperimentConfig, force: bool = False) -> int:
    cdir = _corpus_dir(cfg)
    key = cfg.corpus_key()
    if (cdir / "manifest.json").exists() and not force:
        why = check_manifest(cdir, key)
        if why is not None:
            print(f"refusing to overwrite corpus in {cdir}: {why} (use --force)", file=sys.stderr)
            return EXIT_INVALID
    cdir.mkdir(parents=True, exist_ok=True)
    splits = {"train": (cfg.m, 0)}
    if cfg.held_out:
        splits["held_out"] = (cfg.held_out, HELD_OUT_OFFSET)
    man = {"version": io.FORMAT_VERSION, "config": key, "pairs": {}, "sha256": {}}
    for split, (count, off) in splits.items():
        (cdir / split).mkdir(exist_ok=True)
        entries = []
        for i, (c, n) in enumerate(gen_image_pairs(cfg.scene_spec(off), cfg.noise_spec(off), count)):
            entry = {}
            for tag, img in (("clean", c), ("noisy", n)):
                stem = f"{split}/pair_{i:03d}_{tag}"
                io.write_array(cdir / f"{stem}.txt", img)
                io.write_pgm(cdir / f"{stem}.pgm", img)
                for ext in ("txt", "pgm"):
                    man["sha256"][f"{stem}.{ext}"] = _sha(cdir / f"{stem}.{ext}")
                entry[tag] = f"{stem}.txt"
            entries.append(entry)
        man["pairs"][split] = entries
    (cdir / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    print(f"wrote {cfg.m} training and {cfg.held_out} held-out pairs to {cdir}")
    return EXIT_OK


def load_split(cfg: ExperimentConfig, split: str = "train"):
    """``(TrainingSet of flattened signals, image shape)``."""
    if split == "train" and cfg.data is not None:
        ts = TrainingSet(np.array(cfg.data["clean"], float), np.array(cfg.data["noisy"], float))
        return ts, (ts.n_coords,)
    cdir = _corpus_dir(cfg)
    why = check_manifest(cdir)
    if why is not None:
        raise ValidationError(f"corpus in {cdir} is not usable: {why}")
    man = json.loads((cdir / "manifest.json").read_text())
    if split not in man["pairs"]:
        raise ValidationError(f"corpus has no {split!r} split")
    clean, noisy, shape = [], [], None
    for e in man["pairs"][split]:
        c, n = io.read_array(cdir / e["clean"]), io.read_array(cdir / e["noisy"])
        shape = c.shape
        clean.append(c.ravel())
        noisy.append(n.ravel())
    return TrainingSet(np.array(clean), np.array(noisy)), shape


def _forward(x, filt, levels):
    return x if filt is None else decompose(x, filt, levels)


def _inverse(c, filt, levels):
    return c if filt is None else reconstruct(c, filt, levels)


def _to_coeffs(ts: TrainingSet, filt, levels) -> TrainingSet:
    if filt is None:
        return ts
    return TrainingSet(np.array([_forward(f, filt, levels) for f in ts.clean]),
                       np.array([_forward(g, filt, levels) for g in ts.noisy]))


def _check_grid(ts: TrainingSet, grid: GridSpec):
    problems = validate_problem(ts, grid)
    if problems:
        shown = "\n  ".join(problems[:20])
        more = f"\n  ... {len(problems) - 20} more" if len(problems) > 20 else ""
        raise ValidationError(f"data does not fit grid ({grid.m1}, {grid.m2}]:\n  {shown}{more}")


# -- train --------------------------------------------------------------------


def cmd_train(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ts, _ = load_split(cfg, "train")
    grid = cfg.grid.spec()
    filt, levels = cfg.transform.make(), cfg.transform.levels
    status = EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.route in ("direct", "discrete"):
            cts = _to_coeffs(ts, filt, levels)
            _check_grid(cts, grid)
            learner = learn_discrete if cfg.route == "discrete" else learn_direct
            res = learner(cts, grid, cfg.learn, return_result=True)
            io.write_regularizer(out / "regularizer.txt", res.reg, filt, levels)
            io.write_csv(out / "diagnostics.csv", ["coord", "loss", "tries", "kn"],
                         [(r.coord, r.loss, r.tries, "" if r.kn is None else r.kn) for r in res.reports])
            rows = [("final", grid.n, res.loss)]
            if cfg.sweep:
                rows = [("sweep", n, obj) for n, obj, _ in
                        resolution_sweep(cts, grid, cfg.sweep, cfg.learn, cfg.route)] + rows
            io.write_csv(out / "metrics.csv", ["stage", "n", "objective"], rows)
            print(f"objective {res.loss:.17g}")
        elif cfg.route == "params":
            cts = _to_coeffs(ts, filt, levels)
            p = np.asarray(cfg.penalty.exponents, dtype=float)
            w = np.full((len(p), cts.n_coords), cfg.penalty.weight)
            res = learn_lambdas(cts, w, p, LambdaConfig())
            io.write_lambdas(out / "lambdas.txt", res.lambdas, p, w, filt, levels)
            io.write_csv(out / "metrics.csv", ["iteration", "objective"], list(enumerate(res.history)))
            print(f"lambdas {' '.join('%.17g' % v for v in res.lambdas)} objective {res.objective:.17g}")
            if not res.converged:
                status = EXIT_NOCONV
        else:
            lv = levels or 1
            space = lattice_space(cfg.transform.search_thetas)
            jr = learn_joint(ts, space, grid, lv, cfg.learn)
            io.write_filter(out / "filter.txt", jr.filter, lv)
            io.write_regularizer(out / "regularizer.txt", jr.reg, jr.filter, lv)
            io.write_csv(out / "metrics.csv", ["filter", "objective", "note"],
                         [(lab, "" if o is None else o, note) for lab, o, note in jr.trajectory])
            print(f"selected {jr.filter.label} objective {jr.objective:.17g}")
    for w in caught:
        log.warning("%s", w.message)
        if "stopped after" in str(w.message):
            status = EXIT_NOCONV
    return status


# -- denoise / eval -----------------------------------------------------------


def _load_method(path):
    """Callable ``(noisy rows) -> denoised rows`` plus its description."""
    text = Path(path).read_text()
    if "kind step" in text:
        reg, filt, levels = io.read_regularizer(path)

        def run(rows):
            coeffs = np.array([_forward(r, filt, levels) for r in rows])
            bad = ~reg.grid.contains(coeffs)
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise ValidationError(
                    f"coefficient {coeffs[i, j]!r} (pair {i}, coordinate {j}) outside regularizer grid "
                    f"({reg.grid.m1}, {reg.grid.m2}] n={reg.grid.n}; transform "
                    f"{'identity' if filt is None else filt.label or filt.taps} levels={levels}")
            if coeffs.shape[1] != reg.n_coords:
                raise ValidationError(f"input has {coeffs.shape[1]} coordinates, regularizer {reg.n_coords}")
            den = denoise_all(coeffs, reg)
            return np.array([_inverse(d, filt, levels) for d in den])
        return run, ("step", reg, filt, levels)
    lam, p, w, filt, levels = io.read_lambdas(path)

    def run(rows):
        coeffs = np.array([_forward(r, filt, levels) for r in rows])
        den = denoise_lambda(coeffs, lam, w, p)
        return np.array([_inverse(d, filt, levels) for d in den])
    return run, ("lambda", lam, p, w)


def _psnr(x, ref):
    mse = float(np.mean((x - ref) ** 2))
    return float("inf") if mse == 0 else float(10 * np.log10(1.0 / mse))


def cmd_denoise(cfg: ExperimentConfig, reg_path, input_path=None) -> int:
    out = Path(cfg.out) / "denoised"
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    if input_path:
        arr = io.read_pgm(input_path) if str(input_path).endswith(".pgm") else io.read_array(input_path)
        shape, noisy, clean = arr.shape, arr.reshape(1, -1), None
    else:
        ts, shape = load_split(cfg, "held_out")
        noisy, clean = ts.noisy, ts.clean
    if cfg.operator is not None:
        den, status = _denoise_operator(cfg, reg_path, noisy, out)
    else:
        run, _ = _load_method(reg_path)
        den = run(noisy)
    rows = []
    for i, d in enumerate(den):
        img = d.reshape(shape)
        io.write_array(out / f"pair_{i:03d}.txt", img)
        if img.ndim == 2:
            io.write_pgm(out / f"pair_{i:03d}.pgm", img)
        if clean is not None:
            rows.append((i, float(np.linalg.norm(noisy[i] - clean[i])), float(np.linalg.norm(d - clean[i])),
                         _psnr(noisy[i], clean[i]), _psnr(d, clean[i])))
    if clean is not None:
        io.write_csv(out / "residuals.csv", ["pair", "l2_noisy", "l2_denoised", "psnr_noisy", "psnr_denoised"], rows)
        for r in rows:
            print(f"pair {r[0]}: l2 noisy {r[1]:.6g} -> denoised {r[2]:.6g}")
    return status


def _denoise_operator(cfg, reg_path, noisy, out: Path):
    """Diagonal forward operator: thresholded Landweber with a learned penalty."""
    from .ista import LinearOperator, iterate

    k = np.asarray(cfg.operator, dtype=float)
    lam, p, w, filt, levels = io.read_lambdas(reg_path)
    if filt is not None:
        raise ValidationError("operator mode works in the signal domain; use an identity-transform penalty")
    if len(k) != noisy.shape[1]:
        raise ValidationError(f"operator has {len(k)} entries, signal has {noisy.shape[1]}")
    pen = MultiPenalty(tuple(lam), w, tuple(p))
    K = LinearOperator.diagonal(k)
    den, status = [], EXIT_OK
    for i, g in enumerate(noisy):
        res = iterate(None, g, K, pen)
        io.write_monitor(out / f"monitor_{i:03d}.csv", res.history)
        if not res.converged:
            status = EXIT_NOCONV
        den.append(res.f)
    return np.array(den), status


def cmd_eval(cfg: ExperimentConfig, reg_paths) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    held, _ = load_split(cfg, "held_out")
    train, _ = load_split(cfg, "train")
    table, per_pair = [], []
    methods = [("none", lambda rows: np.array(rows))]
    for p in reg_paths:
        methods.append((Path(p).name, _load_method(p)[0]))
    for name, run in methods:
        dh = run(held.noisy)
        dt = run(train.noisy)
        table.append((name, float(np.sum((dt - train.clean) ** 2)), float(np.sum((dh - held.clean) ** 2))))
        for i in range(held.m):
            per_pair.append((name, i, float(np.linalg.norm(dh[i] - held.clean[i]))))
    io.write_csv(out / "eval.csv", ["method", "train_objective", "heldout_objective"], table)
    io.write_csv(out / "eval_pairs.csv", ["method", "pair", "l2_error"], per_pair)
    for r in table:
        print(f"{r[0]:>24s}  train {r[1]:.6g}  held-out {r[2]:.6g}")
    return EXIT_OK


def cmd_path(cfg: ExperimentConfig) -> int:
    from .ista import regularization_path

    pc = cfg.path
    rng = np.random.default_rng(cfg.seed)
    k = rng.uniform(*pc.k_range, size=pc.n_coords)
    f_true = rng.standard_normal(pc.n_coords)
    pts = regularization_path(f_true, k, pc.eps, np.ones((len(pc.exponents), pc.n_coords)),
                              pc.exponents, seed=cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_csv(out / "path.csv", ["eps", "alpha", "error", "iterations"],
                 [(p.eps, p.alpha, p.error, p.iterations) for p in pts])
    for p in pts:
        print(f"eps {p.eps:.3g}  error {p.error:.6g}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="steplearn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("gen", "train", "denoise", "eval", "path"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--route", choices=ROUTES)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--force", action="store_true", help="overwrite a mismatched corpus")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "denoise":
            sp.add_argument("--reg", required=True, help="regularizer or lambda file")
            sp.add_argument("--input", help="signal (.txt) or image (.pgm); default: held-out corpus")
        if name == "eval":
            sp.add_argument("--reg", nargs="+", default=[], help="regularizer/lambda files to compare")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"route": args.route, "out": args.out, "seed": args.seed})
        if args.command == "gen":
            return cmd_gen(cfg, args.force)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "denoise":
            return cmd_denoise(cfg, args.reg, args.input)
        if args.command == "eval":
            return cmd_eval(cfg, args.reg)
        return cmd_path(cfg)
    except (ValidationError, io.FormatError, NormGateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
