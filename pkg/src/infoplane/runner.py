"""Experiment orchestration: declarative configs, probe scheduling,
trajectory recording, normalization, and deterministic CSV/manifest output.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import datagen, nets
from .estimators import (
    BinningSpec,
    DiscreteView,
    SampleMatrix,
    bin_equal_width,
    joint_view,
    mi_eval_counter,
)
from .objectives import gib_terms, ib_terms, svw_terms

EXPERIMENTS = ("simple_functions", "activation_plane", "adversarial_mnist",
               "synthetic_synergy", "custom")
OBJECTIVE_KINDS = ("IB", "GIB", "SVW")


class ConfigError(ValueError):
    def __init__(self, fieldname, message):
        super().__init__(f"{fieldname}: {message}")
        self.fieldname = fieldname


@dataclass
class ExperimentConfig:
    experiment: str
    dataset: dict = field(default_factory=dict)
    net: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    probe_every: int = 10
    n_bins: int = 30
    objectives: list = field(default_factory=lambda: ["IB", "GIB"])
    beta: float = 1.0
    seeds: list = field(default_factory=lambda: [0])
    ib_layer: str | int = "final"
    feature_subsample: int = 1  # deterministic stride over input features
    attack: Optional[dict] = None
    output_dir: str = "out"

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {self.experiment!r}")
        if self.probe_every < 1:
            raise ConfigError("probe_every", "must be >= 1")
        if self.n_bins < 2:
            raise ConfigError("n_bins", "must be >= 2")
        if not self.seeds:
            raise ConfigError("seeds", "must be non-empty")
        for obj in self.objectives:
            if obj not in OBJECTIVE_KINDS:
                raise ConfigError("objectives", f"unknown objective {obj!r}")
        if not (self.beta > 0 or math.isinf(self.beta)):
            raise ConfigError("beta", "must be positive or infinity")
        if self.feature_subsample < 1:
            raise ConfigError("feature_subsample", "must be >= 1")
        if self.ib_layer != "final" and not isinstance(self.ib_layer, int):
            raise ConfigError("ib_layer", "must be 'final' or a layer index")
        return self

    def to_canonical_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = "inf" if math.isinf(self.beta) else self.beta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        if d.get("beta") == "inf":
            d["beta"] = math.inf
        return cls(**d).validate()

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_canonical_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class InfoTrajectory:
    kind: str
    seed: int
    points: list = field(default_factory=list)  # (epoch, pred, cplx, train_loss, test_loss)
    normalized: Optional[list] = None  # parallel (pred_norm, cplx_norm)
    norm_ranges: Optional[dict] = None
    status: str = "ok"

    def epochs(self):
        return [p[0] for p in self.points]

    def pred_terms(self):
        return [p[1] for p in self.points]

    def cplx_terms(self):
        return [p[2] for p in self.points]


def _minmax_scale(values):
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values), lo, hi
    return [(v - lo) / (hi - lo) for v in values], lo, hi


def normalize_trajectory(t: InfoTrajectory) -> InfoTrajectory:
    """Min-max scale each term independently; constant series map to zeros."""
    if not t.points:
        raise ValueError("cannot normalize an empty trajectory")
    pred_n, plo, phi = _minmax_scale(t.pred_terms())
    cplx_n, clo, chi = _minmax_scale(t.cplx_terms())
    t.normalized = list(zip(pred_n, cplx_n))
    t.norm_ranges = {"pred": [plo, phi], "cplx": [clo, chi]}
    return t


def compression_score(t: InfoTrajectory) -> float:
    """Peak complexity term minus final complexity term."""
    if len(t.points) < 2:
        raise ValueError("compression score needs at least 2 points")
    c = t.cplx_terms()
    return max(c) - c[-1]


def shows_compression(t: InfoTrajectory) -> bool:
    """True when the drop from the peak exceeds 10% of the term's range."""
    c = t.cplx_terms()
    return compression_score(t) > 0.1 * (max(c) - min(c))


# --- dataset / net assembly per experiment ------------------------------

@dataclass
class _PreparedRun:
    x_train: np.ndarray  # raw (unscaled) inputs used for probing
    x_net: np.ndarray  # inputs as fed to the network
    y_train: np.ndarray  # loss targets as fed to the network
    y_probe: np.ndarray  # raw targets used for probing
    x_test: Optional[np.ndarray]
    y_test: Optional[np.ndarray]
    net: nets.DenseNet
    spec: nets.TrainSpec
    attack: Optional[nets.AttackSpec]
    input_binning: BinningSpec
    output_binning: BinningSpec
    target_binning: Optional[BinningSpec]  # None when targets are class labels
    hidden_binning: BinningSpec
    notes: dict


def _prepare_simple_functions(config, seed) -> _PreparedRun:
    which = config.dataset.get("function", "add")
    n_samples = config.dataset.get("n_samples", 1500)
    ds = datagen.gen_simple_function(which, n_samples=n_samples, seed=seed)
    arity = ds.x.n_columns
    test = datagen.gen_simple_function(which, n_samples=n_samples,
                                       value_range=(-1000.0, 1000.0),
                                       seed=seed + 10_000)

    # the raw configuration is not numerically stable under plain gradient
    # descent, so inputs are scaled by their max magnitude and targets to
    # unit variance before training; probing uses the raw values
    x_scale = np.abs(ds.x.values).max(axis=0)
    x_scale[x_scale == 0] = 1.0
    y_scale = ds.y.std() or 1.0
    x_net = ds.x.values / x_scale
    y_net = ds.y / y_scale

    hidden = {"add": 4, "mul": 3, "sp1": 16, "sp2": 8, "sp3": 16}[which]
    act = "identity" if which == "add" else "square"
    net = nets.make_dense_net([arity, hidden, 1], activation=act,
                              output_head="linear", bias=False, seed=seed)
    spec = nets.TrainSpec(
        optimizer=config.train.get("optimizer", "sgd"),
        lr=config.train.get("lr", 0.01),
        epochs=config.train.get("epochs", 1000),
        batch=config.train.get("batch", "full"),
        loss="mse", seed=seed)
    binning = BinningSpec(config.n_bins)
    return _PreparedRun(
        x_train=ds.x.values, x_net=x_net, y_train=y_net, y_probe=ds.y,
        x_test=test.x.values / x_scale, y_test=test.y / y_scale,
        net=net, spec=spec, attack=None,
        input_binning=binning, output_binning=binning,
        target_binning=binning, hidden_binning=binning,
        notes={"function": which, "x_scale": x_scale.tolist(),
               "y_scale": float(y_scale), "input_scaling": "max-abs",
               "target_scaling": "unit-std"})


def _prepare_activation_plane(config, seed) -> _PreparedRun:
    ds = datagen.gen_binary_classification(config.dataset.get("rule_seed", 0))
    activation = config.net.get("activation", "tanh")
    hidden = config.net.get("hidden", [10, 7, 5, 4])
    sizes = [ds.x.n_columns] + list(hidden) + [2]
    net = nets.make_dense_net(sizes, activation=activation,
                              output_head="softmax", bias=True, seed=seed)
    spec = nets.TrainSpec(
        optimizer=config.train.get("optimizer", "adam"),
        lr=config.train.get("lr", 1e-3),
        epochs=config.train.get("epochs", 3000),
        batch=config.train.get("batch", "full"),
        loss="cross_entropy", seed=seed)
    binning = BinningSpec(config.n_bins)
    return _PreparedRun(
        x_train=ds.x.values, x_net=ds.x.values, y_train=ds.y, y_probe=ds.y,
        x_test=None, y_test=None, net=net, spec=spec, attack=None,
        input_binning=BinningSpec(max(config.n_bins, 2)),
        output_binning=binning, target_binning=None,
        hidden_binning=binning,
        notes={"activation": activation, "hidden": list(hidden)})


def _prepare_adversarial(config, seed) -> _PreparedRun:
    images = config.dataset.get("images")
    labels = config.dataset.get("labels")
    if not images or not labels:
        raise ConfigError("dataset", "adversarial_mnist needs images/labels paths")
    ds = datagen.load_idx(images, labels)
    subset = config.dataset.get("subset", 10_000)
    test_size = config.dataset.get("test_size", 500)
    rng = np.random.default_rng(config.dataset.get("subset_seed", 0))
    perm = rng.permutation(ds.x.n_samples)
    train_idx = perm[:min(subset, ds.x.n_samples - test_size)]
    test_idx = perm[len(train_idx):len(train_idx) + test_size]

    hidden = config.net.get("hidden", [1024, 20, 20, 20])
    net = nets.make_dense_net([ds.x.n_columns] + list(hidden) + [10],
                              activation=config.net.get("activation", "tanh"),
                              output_head="softmax", bias=True, seed=seed)
    spec = nets.TrainSpec(
        optimizer=config.train.get("optimizer", "adam"),
        lr=config.train.get("lr", 1e-3),
        epochs=config.train.get("epochs", 2000),
        batch=config.train.get("batch", "full"),
        loss="cross_entropy", seed=seed)
    attack = None
    if config.attack is not None:
        attack = nets.AttackSpec(config.attack.get("epsilon_adv", 0.0),
                                 config.attack.get("clip", True))
    return _PreparedRun(
        x_train=ds.x.values[train_idx], x_net=ds.x.values[train_idx],
        y_train=ds.y[train_idx], y_probe=ds.y[train_idx],
        x_test=ds.x.values[test_idx], y_test=ds.y[test_idx],
        net=net, spec=spec, attack=attack,
        input_binning=BinningSpec(config.n_bins, "fixed", [(0.0, 1.0)]),
        output_binning=BinningSpec(config.n_bins),
        target_binning=None,
        hidden_binning=BinningSpec(config.n_bins, "fixed", [(-1.0, 1.0)]),
        notes={"subset": len(train_idx), "test_size": len(test_idx),
               "attack": asdict(attack) if attack else None})


def _prepare_custom(config, seed) -> _PreparedRun:
    raise ConfigError("experiment", "custom experiments are driven through the API")


def _prepare_synthetic(config, seed) -> _PreparedRun:
    raise ConfigError(
        "experiment",
        "synthetic_synergy has no training loop; use synergy_noise_curves")


_PREPARERS = {
    "simple_functions": _prepare_simple_functions,
    "activation_plane": _prepare_activation_plane,
    "adversarial_mnist": _prepare_adversarial,
    "synthetic_synergy": _prepare_synthetic,
    "custom": _prepare_custom,
}


def synergy_noise_curves(n_values, p_flip=1.0 / 3.0, n_samples=None, seed=0):
    """Exact (and optionally sampled) MI of each synergy function with the
    noise label and with the clean input, per input dimension.

    Returns {function: [(n, mi_noise, mi_input, mi_noise_sampled,
    mi_input_sampled), ...]}; the sampled entries are NaN when n_samples
    is None.
    """
    from .estimators import exact_mi, with_column, mutual_information

    curves = {f: [] for f in datagen.SYNERGY_FUNCTIONS}
    for n in n_values:
        pmf = datagen.enumerate_force_to_one(datagen.NoiseSpec(p_flip, n))
        clean = list(range(n))
        eps_coord = 2 * n
        if n_samples:
            xc, xn, eps = datagen.gen_force_to_one(
                datagen.NoiseSpec(p_flip, n), n_samples, seed)
        for f in datagen.SYNERGY_FUNCTIONS:
            if f == "f2" and n < 2:
                continue
            noisy_f = {
                "f1": lambda t: t[n],
                "f2": lambda t: t[n] ^ t[n + 1],
                "f3": lambda t: _xor_all(t[n:2 * n]),
            }[f]
            ext = with_column(pmf, noisy_f)
            fcoord = ext.n_coords - 1
            mi_eps = exact_mi(ext, [fcoord], [eps_coord])
            mi_x = exact_mi(ext, [fcoord], clean)
            mi_eps_s = mi_x_s = float("nan")
            if n_samples:
                fv = datagen.apply_synergy_function(xn, f)
                f_view = DiscreteView(fv, 2)
                eps_view = DiscreteView(eps, n + 1)
                x_view = joint_view(xc, range(n))
                mi_eps_s = mutual_information(f_view, eps_view)
                mi_x_s = mutual_information(f_view, x_view)
            curves[f].append((n, mi_eps, mi_x, mi_eps_s, mi_x_s))
    return curves


def _xor_all(bits):
    out = 0
    for b in bits:
        out ^= b
    return out


# --- probing -------------------------------------------------------------

def _bin_view(values: np.ndarray, spec: BinningSpec) -> DiscreteView:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    mat = SampleMatrix(values, [f"c{j}" for j in range(values.shape[1])])
    binned, _ = bin_equal_width(mat, _expand_fixed(spec, mat.n_columns))
    return joint_view(binned, range(binned.shape[1]))


def _expand_fixed(spec: BinningSpec, n_cols: int) -> BinningSpec:
    if spec.range_policy == "fixed" and len(spec.fixed_intervals) == 1:
        return BinningSpec(spec.n_bins, "fixed", spec.fixed_intervals * n_cols)
    return spec


def _probe_reports(run: _PreparedRun, net: nets.DenseNet, config: ExperimentConfig):
    """Compute one ObjectiveReport per requested objective at a snapshot."""
    x_mat = SampleMatrix(run.x_train, [f"x{j}" for j in range(run.x_train.shape[1])])
    x_binned, _ = bin_equal_width(x_mat, _expand_fixed(run.input_binning, x_mat.n_columns))
    stride = config.feature_subsample
    x_cols = x_binned[:, ::stride]

    outputs, hiddens = nets.forward(net, SampleMatrix(run.x_net, x_mat.column_names))
    logits = nets.forward_logits(net, run.x_net)

    # z: binned raw network output (logits for classifiers)
    z_view = _bin_view(logits, run.output_binning)
    # y: class labels directly, or binned regression targets
    if run.target_binning is None:
        y_view = DiscreteView(run.y_probe.astype(np.int64),
                              int(run.y_probe.max()) + 1)
    else:
        y_view = _bin_view(run.y_probe.reshape(-1, 1), run.target_binning)

    reports = {}
    if "IB" in config.objectives:
        layer = len(hiddens) - 1 if config.ib_layer == "final" else config.ib_layer
        t_view = _bin_view(hiddens[layer].values, run.hidden_binning)
        x_full_view = joint_view(x_binned, range(x_binned.shape[1]))
        reports["IB"] = ib_terms(x_full_view, t_view, y_view, config.beta)
    n_feat = x_cols.shape[1]
    if "GIB" in config.objectives:
        before = mi_eval_counter.value
        reports["GIB"] = gib_terms(x_cols, z_view, y_view, config.beta)
        cost = mi_eval_counter.value - before
        assert cost == 2 * n_feat + 1, f"probe cost {cost} != 2N+1"
    if "SVW" in config.objectives:
        reports["SVW"] = svw_terms(x_cols, z_view, y_view, config.beta)
    return reports


def run_experiment(config: ExperimentConfig, progress=None):
    """Train per seed, probe on schedule, and return (trajectories, manifest)."""
    config.validate()
    prepare = _PREPARERS[config.experiment]
    t0 = time.time()
    trajectories = []
    statuses = {}
    for seed in config.seeds:
        run = prepare(config, seed)
        probe_epochs = list(range(config.probe_every, run.spec.epochs + 1,
                                  config.probe_every))
        eval_data = None
        if run.x_test is not None:
            eval_data = (run.x_test, run.y_test)
        status = "ok"
        try:
            if run.attack is not None:
                _, snapshots, _ = nets.adversarial_train(
                    run.net, (run.x_net, run.y_train), run.spec, run.attack,
                    probes=probe_epochs, eval_data=eval_data)
            else:
                _, snapshots, _ = nets.train(
                    run.net, (run.x_net, run.y_train), run.spec,
                    probes=probe_epochs, eval_data=eval_data)
        except nets.TrainingDiverged as exc:
            status = f"diverged at epoch {exc.epoch}"
            snapshots = []
        statuses[str(seed)] = status

        seed_trajs = {k: InfoTrajectory(k, seed, status=status)
                      for k in config.objectives}
        for snap in snapshots:
            reports = _probe_reports(run, snap.params, config)
            for kind, rep in reports.items():
                seed_trajs[kind].points.append(
                    (snap.epoch, rep.prediction_term, rep.complexity_term,
                     snap.train_loss,
                     snap.test_loss if snap.test_loss is not None else float("nan")))
        for kind in config.objectives:
            t = seed_trajs[kind]
            if t.points:
                normalize_trajectory(t)
            trajectories.append(t)
        if progress:
            progress(seed, status)

    manifest = {
        "config": config.to_canonical_dict(),
        "config_hash": config_hash(config),
        "seeds": list(config.seeds),
        "statuses": statuses,
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__},
        "wall_time_s": round(time.time() - t0, 3),
        "normalization": {
            f"{t.kind}_seed{t.seed}": t.norm_ranges for t in trajectories},
    }
    return trajectories, manifest


# --- output --------------------------------------------------------------

CSV_HEADER = "epoch,pred_term,cplx_term,pred_norm,cplx_norm,train_loss,test_loss"


def _fmt(v: float) -> str:
    return "%.9g" % v


def emit(trajectories, manifest, out_dir):
    """Write one CSV per (objective, seed) plus manifest.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for t in trajectories:
            if not t.points:
                continue
            path = out / f"{t.kind.lower()}_seed{t.seed}.csv"
            lines = [CSV_HEADER]
            norms = t.normalized or [(0.0, 0.0)] * len(t.points)
            for (epoch, pred, cplx, trl, tel), (pn, cn) in zip(t.points, norms):
                lines.append(",".join(
                    [str(epoch)] + [_fmt(v) for v in (pred, cplx, pn, cn, trl, tel)]))
            path.write_text("\n".join(lines) + "\n")
            paths.append(str(path))
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return paths
    except OSError as exc:
        raise OSError(f"cannot write to {out}: {exc}") from exc


def load_trajectory_csv(path) -> InfoTrajectory:
    """Re-parse an emitted CSV (kind/seed recovered from the filename)."""
    p = Path(path)
    stem = p.stem
    kind, _, seed = stem.rpartition("_seed")
    t = InfoTrajectory(kind.upper(), int(seed))
    lines = p.read_text().splitlines()
    if lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    norms = []
    for line in lines[1:]:
        parts = line.split(",")
        epoch = int(parts[0])
        pred, cplx, pn, cn, trl, tel = (float(v) for v in parts[1:])
        t.points.append((epoch, pred, cplx, trl, tel))
        norms.append((pn, cn))
    t.normalized = norms
    return t
