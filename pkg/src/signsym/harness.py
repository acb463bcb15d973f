"""Pretrain -> fine-tune -> attack pipeline, result records and reports.

A run pretrains a backbone with ``pretrain_rule`` on the dataset labels,
attaches a fresh task head (classifier or 32-bit hasher), fine-tunes *all*
weights once per rule in ``finetune_rules`` (backbone and head at separate
learning rates) and measures every attack at every epsilon on a fixed,
seeded evaluation subset.  Checkpoints are keyed by the settings that
produced them, so a rerun with the same config resumes instead of
retraining.

For decision-based attacks the minimum-L2 adversarial found within the
query budget is compared against the L2 radius ``epsilon * sqrt(D)`` of the
smallest L2 ball containing the L-inf ball; an input counts as robust at
``epsilon`` if it is classified correctly and no adversarial point was found
inside that radius.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .attacks import (AttackSpec, Family, boundary_attack, fgsm, hag, hsja, label_oracle,
                      pgd)
from .datasets import load_dataset
from .errors import ConfigError, SpecError, StartNotFoundError
from .feedback import FeedbackState, Rule, train
from .network import Network, attach_head, mlp, small_cnn
from .retrieval import RetrievalIndex, binarize, map_at_k
from .tensor import SeededRng

log = logging.getLogger(__name__)

CSV_COLUMNS = ["config_hash", "rule", "attack", "epsilon", "clean", "robust", "n_eval",
               "wall_time_s", "seed"]
DEFAULT_EPSILONS = (0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5)
CLASSIFICATION_ATTACKS = (Family.FGSM, Family.PGD, Family.BOUNDARY, Family.HSJA)


@dataclass
class ExperimentConfig:
    task: str = "classification"
    dataset: str = "mnist"
    model: str = "small_cnn"
    pretrain_rule: str = "BP"
    finetune_rules: list = field(default_factory=lambda: ["BP", "uSF", "frSF", "brSF"])
    pretrain_epochs: int = 4
    finetune_epochs: int = 5
    batch_size: int = 32
    lr_pretrain: float = 1e-3
    lr_backbone: float = 1e-5
    lr_head: float = 1e-4
    weight_decay: float = 5e-4
    attacks: list = field(default_factory=lambda: ["FGSM", "PGD"])
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    attack_steps: int = 5
    alpha_ratio: float = 1 / 3
    attack_gradients: str = "bp"
    query_budget: int = 1000
    n_train: int = 0
    n_eval: int = 500
    n_eval_blackbox: int = 20
    code_bits: int = 32
    map_k: int = 5000
    seed: int = 0
    data_dir: str = ""

    def __post_init__(self):
        self.finetune_rules = [Rule.parse(r).value for r in _as_list(self.finetune_rules)]
        self.pretrain_rule = Rule.parse(self.pretrain_rule).value
        try:
            self.attacks = [Family.parse(a).value for a in _as_list(self.attacks)]
        except SpecError as exc:
            raise ConfigError(str(exc)) from None
        self.epsilons = [float(e) for e in _as_list(self.epsilons)]
        self.validate()

    def validate(self) -> None:
        if self.task not in ("classification", "hashing"):
            raise ConfigError(f"task must be classification or hashing, got {self.task!r}")
        if self.attack_gradients not in ("bp", "deployed"):
            raise ConfigError("attack_gradients must be 'bp' or 'deployed'")
        eps = self.epsilons
        if not eps or any(b <= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"epsilon sweep must be strictly increasing, got {eps}")
        if eps[0] < 0:
            raise ConfigError("epsilons must be non-negative")
        if self.task == "classification" and eps[0] != 0.0:
            raise ConfigError("classification sweeps start at epsilon 0")
        for name in self.attacks:
            fam = Family.parse(name)
            if self.task == "hashing" and fam is not Family.HAG:
                raise ConfigError(f"{fam.value} is a classification attack; hashing runs use HAG")
            if self.task == "classification" and fam is Family.HAG:
                raise ConfigError("HAG needs task = hashing")
        if not self.finetune_rules:
            raise ConfigError("no fine-tuning rules requested")
        if self.batch_size < 1 or self.n_eval < 1 or self.code_bits < 1 or self.map_k < 1:
            raise ConfigError("batch_size, n_eval, code_bits and map_k must be positive")
        if not (self.model == "small_cnn" or self.model.startswith("mlp:")):
            raise ConfigError(f"model must be small_cnn or mlp:<widths>, got {self.model!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self, keys=None) -> str:
        d = self.to_dict()
        if keys is not None:
            d = {k: d[k] for k in keys}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def config_hash(self) -> str:
        return self.digest()

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        """Parse ``key = value`` lines (``#`` comments, comma-separated lists)."""
        types = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], value, lineno)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text, **overrides)


def _as_list(v):
    if isinstance(v, str):
        return [s.strip() for s in v.split(",") if s.strip()]
    return list(v)


def _coerce(f: dataclasses.Field, value: str, lineno: int):
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    try:
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            return _as_list(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {value!r} for {f.name}") from None
    return value


@dataclass
class RunRecord:
    config_hash: str
    rule: str
    attack: str
    epsilon: float
    clean: float
    robust: float
    n_eval: int
    wall_time_s: float
    seed: int

    def __post_init__(self):
        for name in ("clean", "robust"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} metric {v} outside [0, 1]")


# ---------------------------------------------------------------- models / data


def build_model(cfg: ExperimentConfig, input_shape: tuple, n_classes: int) -> Network:
    if cfg.model == "small_cnn":
        if len(input_shape) != 3:
            raise ConfigError("small_cnn needs image inputs")
        return small_cnn(input_shape, head=("classifier", n_classes), seed=cfg.seed)
    widths = [int(w) for w in cfg.model.split(":", 1)[1].split(",") if w.strip()]
    d = int(np.prod(input_shape))
    if len(input_shape) != 1:
        raise ConfigError("mlp models need flat inputs")
    return mlp([d, *widths, n_classes], head=("classifier", n_classes), seed=cfg.seed)


def load_data(cfg: ExperimentConfig):
    """Train split (optionally subsampled) and the seeded evaluation subset."""
    x, y = load_dataset(cfg.dataset, "train", cfg.data_dir or None, seed=cfg.seed)
    xt, yt = load_dataset(cfg.dataset, "test", cfg.data_dir or None, seed=cfg.seed)
    if cfg.model.startswith("mlp:") and x.ndim > 2:
        x, xt = x.reshape(len(x), -1), xt.reshape(len(xt), -1)
    if cfg.n_train:
        keep = np.sort(SeededRng(cfg.seed, stream=501).permutation(len(x))[:cfg.n_train])
        x, y = x[keep], y[keep]
    order = SeededRng(cfg.seed, stream=502).permutation(len(xt))[:cfg.n_eval]
    return (x, y), (xt[order], yt[order])


PRETRAIN_KEYS = ("dataset", "model", "pretrain_rule", "pretrain_epochs", "batch_size",
                 "lr_pretrain", "weight_decay", "n_train", "seed", "data_dir")
FINETUNE_KEYS = PRETRAIN_KEYS + ("task", "finetune_epochs", "lr_backbone", "lr_head",
                                 "code_bits")


def _ckpt_dir(out_dir) -> Path | None:
    if out_dir is None:
        return None
    d = Path(out_dir) / "checkpoints"
    d.mkdir(parents=True, exist_ok=True)
    return d


def pretrain(cfg: ExperimentConfig, train_data, out_dir=None) -> Network:
    d = _ckpt_dir(out_dir)
    path = d / f"pretrain-{cfg.digest(PRETRAIN_KEYS)}.ckpt" if d else None
    if path is not None and path.exists():
        log.info("reusing %s", path)
        return checkpoint.load(path)[0]
    x, y = train_data
    n_classes = int(y.max()) + 1
    net = build_model(cfg, x.shape[1:], n_classes)
    res = train(net, (x, y), cfg.pretrain_rule, epochs=cfg.pretrain_epochs,
                batch_size=cfg.batch_size, lr=cfg.lr_pretrain, seed=cfg.seed,
                weight_decay=cfg.weight_decay)
    log.info("pretrain losses %s", res.losses)
    if path is not None:
        checkpoint.save(path, res.net)
    return res.net


def finetune(cfg: ExperimentConfig, rule, backbone: Network, train_data, out_dir=None):
    """Fresh head + fine-tune all weights with ``rule``; returns (net, feedback state)."""
    rule = Rule.parse(rule)
    d = _ckpt_dir(out_dir)
    path = d / f"finetune-{rule.value}-{cfg.digest(FINETUNE_KEYS)}.ckpt" if d else None
    if path is not None and path.exists():
        log.info("reusing %s", path)
        net, extras = checkpoint.load(path)
        return net, FeedbackState.from_arrays(net, extras)
    x, y = train_data
    head = ("hasher", cfg.code_bits) if cfg.task == "hashing" else ("classifier", int(y.max()) + 1)
    net = attach_head(backbone, head, seed=cfg.seed)
    lr = {"default": cfg.lr_backbone, net.head_index: cfg.lr_head}
    res = train(net, (x, y), rule, epochs=cfg.finetune_epochs, batch_size=cfg.batch_size,
                lr=lr, seed=cfg.seed + 1, weight_decay=cfg.weight_decay)
    log.info("finetune %s losses %s", rule.value, res.losses)
    if path is not None:
        checkpoint.save(path, res.net, res.state.to_arrays())
    return res.net, res.state


# ---------------------------------------------------------------- evaluation


def _gradient_route(cfg: ExperimentConfig, rule: Rule, state: FeedbackState):
    if cfg.attack_gradients == "deployed":
        return rule, state
    return Rule.BP, None


def accuracy(net: Network, x, y) -> float:
    return float(np.mean(net.predict(x) == y))


def blackbox_distances(net: Network, family: Family, x, y, budget: int, seed: int) -> np.ndarray:
    """Minimum L2 adversarial distance per input (0 if misclassified, inf if none found)."""
    oracle = label_oracle(net)
    attack = boundary_attack if family is Family.BOUNDARY else hsja
    out = np.empty(len(x))
    for i in range(len(x)):
        spec = AttackSpec(family, query_budget=budget, seed=seed * 100_003 + i)
        try:
            out[i] = attack(oracle, x[i], int(y[i]), spec).l2
        except StartNotFoundError:
            out[i] = np.inf
    return out


def evaluate_classification(cfg, rule, net, state, eval_data, config_hash) -> list[RunRecord]:
    x, y = eval_data
    records = []
    grad_rule, grad_state = _gradient_route(cfg, rule, state)
    clean = accuracy(net, x, y)
    nb = min(cfg.n_eval_blackbox, len(x))
    for name in cfg.attacks:
        fam = Family.parse(name)
        if fam.white_box:
            for eps in cfg.epsilons:
                t0 = time.perf_counter()
                if fam is Family.FGSM:
                    res = fgsm(net, x, y, AttackSpec(fam, eps), grad_rule, grad_state)
                else:
                    spec = AttackSpec(fam, eps, cfg.alpha_ratio * eps if eps > 0 else None,
                                      cfg.attack_steps)
                    res = pgd(net, x, y, spec, grad_rule, grad_state)
                robust = float(np.mean(net.predict(res.x_adv) == y))
                records.append(RunRecord(config_hash, rule.value, fam.value, eps, clean, robust,
                                         len(x), time.perf_counter() - t0, cfg.seed))
        else:
            t0 = time.perf_counter()
            xb, yb = x[:nb], y[:nb]
            dist = blackbox_distances(net, fam, xb, yb, cfg.query_budget, cfg.seed)
            correct = net.predict(xb) == yb
            clean_b = float(np.mean(correct))
            elapsed = (time.perf_counter() - t0) / len(cfg.epsilons)
            radius_scale = math.sqrt(xb[0].size)
            for eps in cfg.epsilons:
                robust = float(np.mean(correct & (dist > eps * radius_scale)))
                records.append(RunRecord(config_hash, rule.value, fam.value, eps, clean_b,
                                         robust, nb, elapsed, cfg.seed))
    return records


def hash_codes(net: Network, x) -> np.ndarray:
    return binarize(net.predict(x))


def evaluate_hashing(cfg, rule, net, state, train_data, eval_data, config_hash) -> list[RunRecord]:
    x, y = eval_data
    db_x, db_y = train_data
    index = RetrievalIndex.build(hash_codes(net, db_x), db_y)
    k = min(cfg.map_k, len(index))
    clean = map_at_k(hash_codes(net, x), y, index, k)
    grad_rule, grad_state = _gradient_route(cfg, rule, state)
    records = []
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        spec = AttackSpec(Family.HAG, eps, cfg.alpha_ratio * eps if eps > 0 else None,
                          cfg.attack_steps)
        res = hag(net, x, spec, grad_rule, grad_state)
        robust = map_at_k(res.extra["adv_codes"], y, index, k)
        records.append(RunRecord(config_hash, rule.value, Family.HAG.value, eps, clean, robust,
                                 len(x), time.perf_counter() - t0, cfg.seed))
    return records


def run_pipeline(cfg: ExperimentConfig, out_dir=None, stages=("pretrain", "finetune", "attack")):
    """Run the requested stages; returns the list of :class:`RunRecord` (empty
    unless ``attack`` is among ``stages``).  Writes checkpoints, ``results.csv``
    and ``results.svg`` under ``out_dir`` when given."""
    cfg.validate()
    train_data, eval_data = load_data(cfg)
    backbone = pretrain(cfg, train_data, out_dir)
    if "finetune" not in stages and "attack" not in stages:
        return []
    tuned = {r: finetune(cfg, r, backbone, train_data, out_dir) for r in cfg.finetune_rules}
    if "attack" not in stages:
        return []
    records = []
    for r in cfg.finetune_rules:
        net, state = tuned[r]
        rule = Rule.parse(r)
        if cfg.task == "classification":
            records += evaluate_classification(cfg, rule, net, state, eval_data, cfg.config_hash)
        else:
            records += evaluate_hashing(cfg, rule, net, state, train_data, eval_data,
                                        cfg.config_hash)
    if out_dir is not None:
        emit_csv(records, Path(out_dir) / "results.csv")
        emit_svg_plot(records, Path(out_dir) / "results.svg")
    return records


# ---------------------------------------------------------------- reports


def emit_csv(records, path) -> None:
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([r.config_hash, r.rule, r.attack, repr(float(r.epsilon)),
                             repr(float(r.clean)), repr(float(r.robust)), int(r.n_eval),
                             repr(float(r.wall_time_s)), int(r.seed)])


def read_csv(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        return [
            RunRecord(row["config_hash"], row["rule"], row["attack"], float(row["epsilon"]),
                      float(row["clean"]), float(row["robust"]), int(row["n_eval"]),
                      float(row["wall_time_s"]), int(row["seed"]))
            for row in reader
        ]


RULE_COLORS = {"BP": "#d62728", "FA": "#7f7f7f", "uSF": "#1f77b4", "frSF": "#2ca02c",
               "brSF": "#9467bd"}


def _log_x(eps: float, floor: float) -> float:
    return math.log10(eps if eps > 0 else floor)


def emit_svg_plot(records, path, width: int = 360, height: int = 260) -> None:
    """One panel per attack; one polyline per rule; epsilon on a log axis
    (epsilon 0 drawn one decade left of the smallest positive value)."""
    if not records:
        raise ValueError("no records to plot")
    attacks = list(dict.fromkeys(r.attack for r in records))
    rules = list(dict.fromkeys(r.rule for r in records))
    positive = [r.epsilon for r in records if r.epsilon > 0]
    floor = min(positive) / 10 if positive else 1e-3
    xs = [_log_x(r.epsilon, floor) for r in records]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    m = 40
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * len(attacks)}" '
             f'height="{height}" viewBox="0 0 {width * len(attacks)} {height}">']
    for p, attack in enumerate(attacks):
        ox = p * width
        parts.append(f'<g data-attack="{attack}">')
        parts.append(f'<text x="{ox + width / 2:.1f}" y="16" text-anchor="middle" '
                     f'font-size="13">{attack}</text>')
        parts.append(f'<rect x="{ox + m}" y="{m - 10}" width="{width - 2 * m + 10}" '
                     f'height="{height - 2 * m + 10}" fill="none" stroke="#444"/>')
        for tick in (0.0, 0.5, 1.0):
            ty = height - m - tick * (height - 2 * m - 10)
            parts.append(f'<text x="{ox + m - 4}" y="{ty:.1f}" text-anchor="end" '
                         f'font-size="9">{tick:g}</text>')
        for rule in rules:
            rows = sorted((r for r in records if r.attack == attack and r.rule == rule),
                          key=lambda r: r.epsilon)
            if not rows:
                continue
            pts = []
            for r in rows:
                px = ox + m + (_log_x(r.epsilon, floor) - x_lo) / (x_hi - x_lo) * (width - 2 * m)
                py = height - m - r.robust * (height - 2 * m - 10)
                pts.append(f"{px:.2f},{py:.2f}")
            color = RULE_COLORS.get(rule, "#000")
            parts.append(f'<polyline data-rule="{rule}" fill="none" stroke="{color}" '
                         f'stroke-width="1.5" points="{" ".join(pts)}"/>')
        for j, rule in enumerate(rules):
            parts.append(f'<text x="{ox + width - m}" y="{m + 12 * j}" text-anchor="end" '
                         f'font-size="10" fill="{RULE_COLORS.get(rule, "#000")}">{rule}</text>')
        parts.append("</g>")
    parts.append(f'<text x="{width * len(attacks) / 2:.1f}" y="{height - 8}" '
                 f'text-anchor="middle" font-size="11">epsilon (log scale)</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
