"""Experiment orchestration with oracle masks and weights.

A run samples scenarios from a master seed, renders each one, computes oracle
masks and channel weights, runs every requested method and scores the
outputs. Sweeps reuse each rendered scenario across all hyperparameter values.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .beamforming import DIAG_LOADING, REFERENCE_MODES, STEERING_MODES, beamform_pipeline
from .corpus import SyntheticCorpus
from .dsp import FrameParams, Mask, Waveform, phase_sensitive_mask, stft
from .errors import AdhocSepError
from .fileio import read_wav, write_wav
from .metrics import evaluate
from .room import MixtureRecord, SamplerBounds, Scenario, mix_scenario, sample_scenario
from .selection import (
    SelectionMask,
    default_n,
    select_auto_n_best,
    select_fixed_n_best,
    select_one_best,
    select_soft_n_best,
)
from .weighting import ChannelWeights, noisy_oracle_weights

log = logging.getLogger(__name__)

METHODS = ("single-channel", "all-channels", "dabse+1-best", "dabse+fixed-n",
           "dabse+auto-n", "dabse+soft-n")
MASK_TARGETS = ("reverberant", "direct")
EVAL_REFERENCES = ("direct", "dry")
METRIC_KEYS = ("si_sdr", "sdr", "stoi", "pesq")


class ExperimentError(AdhocSepError, RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to replay an experiment.

    ``target_list`` / ``interf_list`` are WAV paths, or a single JSON file
    holding ``[{"path": ..., "gender": ...}, ...]``. When both are empty the
    bundled synthetic corpus (seeded by ``corpus_seed``) is used.
    """
    num_scenarios: int = 50
    num_mics: int = 16
    methods: list = field(default_factory=lambda: list(METHODS))
    n: int | None = None
    gamma: float = 0.5
    steering: str = "target-cov"
    reference: str = "mask-snr"
    diag_loading: float = DIAG_LOADING
    mask_target: str = "reverberant"
    weight_mode: str = "direct_only"
    weight_sigma: float = 0.0
    eval_reference: str = "direct"
    metrics: list = field(default_factory=lambda: ["si_sdr", "sdr", "stoi"])
    sampler: dict = field(default_factory=dict)
    target_list: list = field(default_factory=list)
    interf_list: list = field(default_factory=list)
    corpus_seed: int = 0
    utterance_seconds: float = 3.0
    sample_rate: int = 8000
    master_seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    write_wavs: bool = False
    plots: bool = False
    pesq_tool: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.num_scenarios < 1:
            raise ValueError("num_scenarios must be at least 1")
        if self.num_mics < 1:
            raise ValueError("num_mics must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        for name, value, allowed in (("steering", self.steering, STEERING_MODES),
                                     ("reference", self.reference, REFERENCE_MODES),
                                     ("mask_target", self.mask_target, MASK_TARGETS),
                                     ("eval_reference", self.eval_reference, EVAL_REFERENCES),
                                     ("weight_mode", self.weight_mode, ("direct_only", "reverberant"))):
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {value!r}")
        for m in self.metrics:
            if m not in METRIC_KEYS:
                raise ValueError(f"unknown metric {m!r}; choose from {METRIC_KEYS}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.n is not None and not 1 <= self.n <= self.num_mics:
            raise ValueError(f"n must lie in [1, {self.num_mics}]")
        if bool(self.target_list) != bool(self.interf_list):
            raise ValueError("give both target_list and interf_list, or neither")
        for entry in _expand_list(self.target_list) + _expand_list(self.interf_list):
            if not Path(entry["path"]).exists():
                raise FileNotFoundError(entry["path"])
        SamplerBounds.from_dict(self.sampler)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        d = json.loads(Path(path).read_text())
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)


def _expand_list(items) -> list[dict]:
    if isinstance(items, str):
        items = [items]
    out = []
    for it in items:
        if isinstance(it, dict):
            out.append(it)
        elif str(it).endswith(".json"):
            out.extend(_expand_list(json.loads(Path(it).read_text())))
        else:
            out.append({"path": str(it)})
    return out


def scenario_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def oracle_masks(record: MixtureRecord, target: str = "reverberant",
                 params: FrameParams | None = None) -> list[Mask]:
    """Per-channel phase-sensitive masks from the known target component."""
    if target not in MASK_TARGETS:
        raise ValueError(f"target must be one of {MASK_TARGETS}, got {target!r}")
    src = record.target_image if target == "reverberant" else record.target_direct
    params = params or FrameParams()
    return [phase_sensitive_mask(stft(x, params), stft(y, params))
            for x, y in zip(src, record.mixture)]


def single_channel_pick(seed: int, num_channels: int) -> int:
    """The random channel of the single-channel baseline, reproducible from the scenario seed."""
    return int(np.random.default_rng([int(seed), 1]).integers(num_channels))


@dataclass(frozen=True)
class MethodSpec:
    method: str
    n: int | None = None
    gamma: float | None = None

    @property
    def hyper(self) -> str:
        if self.method == "dabse+fixed-n":
            return f"n={self.n}"
        if self.method in ("dabse+auto-n", "dabse+soft-n"):
            return f"gamma={self.gamma:g}"
        return ""


def method_specs(cfg: ExperimentConfig) -> list[MethodSpec]:
    n = cfg.n if cfg.n is not None else default_n(cfg.num_mics)
    out = []
    for m in cfg.methods:
        if m == "dabse+fixed-n":
            out.append(MethodSpec(m, n=n))
        elif m in ("dabse+auto-n", "dabse+soft-n"):
            out.append(MethodSpec(m, gamma=cfg.gamma))
        else:
            out.append(MethodSpec(m))
    return out


def selection_for(spec: MethodSpec, q: ChannelWeights, seed: int) -> SelectionMask:
    w = len(q)
    if spec.method == "single-channel":
        p = np.zeros(w)
        p[single_channel_pick(seed, w)] = 1.0
        return SelectionMask(p)
    if spec.method == "all-channels":
        return SelectionMask(np.ones(w))
    if spec.method == "dabse+1-best":
        return select_one_best(q)
    if spec.method == "dabse+fixed-n":
        return select_fixed_n_best(q, spec.n)
    if spec.method == "dabse+auto-n":
        return select_auto_n_best(q, spec.gamma)
    if spec.method == "dabse+soft-n":
        return select_soft_n_best(q, spec.gamma)
    raise ValueError(f"unknown method {spec.method!r}")


class _Sources:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.targets = _expand_list(cfg.target_list)
        self.interfs = _expand_list(cfg.interf_list)
        self.synth = None if self.targets else SyntheticCorpus(
            cfg.corpus_seed, cfg.utterance_seconds, cfg.sample_rate)

    def pair(self, index: int, seed: int):
        if self.synth is not None:
            a = self.synth.utterance(2 * index)
            b = self.synth.utterance(2 * index + 1)
            return a.wave, b.wave, f"{a.gender}+{b.gender}"
        rng = np.random.default_rng([int(seed), 2])
        ta = self.targets[int(rng.integers(len(self.targets)))]
        choices = [e for e in self.interfs if e["path"] != ta["path"]]
        if not choices:
            raise ExperimentError("interferer list has no file distinct from the target")
        ib = choices[int(rng.integers(len(choices)))]
        tw, iw = read_wav(ta["path"]), read_wav(ib["path"])
        pair = None
        if "gender" in ta and "gender" in ib:
            pair = f"{ta['gender']}+{ib['gender']}"
        return tw, iw, pair


def render_scenario(cfg: ExperimentConfig, index: int) -> tuple[MixtureRecord, str | None]:
    seed = scenario_seed(cfg.master_seed, index)
    scen = sample_scenario(seed, SamplerBounds.from_dict(cfg.sampler), cfg.num_mics)
    tw, iw, pair = _Sources(cfg).pair(index, seed)
    return mix_scenario(tw, iw, scen), pair


def _score_row(cfg, record, spec, masks, q, index, pair, wav_dir=None) -> dict:
    seed = record.scenario.seed
    sel = selection_for(spec, q, seed)
    res = beamform_pipeline(record, sel, masks, steering=cfg.steering,
                            diag_loading=cfg.diag_loading, reference=cfg.reference,
                            return_details=True)
    if cfg.eval_reference == "direct":
        ref = record.target_direct[res.reference_channel]
    else:
        ref = record.target_dry
    rep = evaluate(res.output, ref, record.sample_rate, metrics=cfg.metrics,
                   pesq_tool=cfg.pesq_tool)
    row = {
        "scenario_id": index,
        "scenario_seed": seed,
        "method": spec.method,
        "hyper": spec.hyper,
        "gender_pair": pair or "",
        "num_selected": int(sel.support.size),
        "reference_channel": res.reference_channel,
    }
    for k, v in (("si_sdr", rep.si_sdr_db), ("sdr", rep.sdr_db), ("stoi", rep.stoi),
                 ("pesq", rep.pesq)):
        if k in cfg.metrics:
            row[k] = None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)
    if wav_dir is not None:
        tag = spec.method.replace("+", "_") + (f"_{spec.hyper}" if spec.hyper else "")
        write_wav(Path(wav_dir) / f"scenario{index:04d}_{tag}.wav", res.output)
    return row


def run_scenario(cfg: ExperimentConfig, index: int, specs: list[MethodSpec]):
    """All rows for one scenario, or ``(None, reason)`` when it must be skipped."""
    try:
        record, pair = render_scenario(cfg, index)
    except (AdhocSepError, OSError, ValueError) as exc:
        return None, f"scenario {index}: {type(exc).__name__}: {exc}"
    masks = oracle_masks(record, cfg.mask_target)
    q = noisy_oracle_weights(record, cfg.weight_sigma, record.scenario.seed, cfg.weight_mode)
    wav_dir = None
    if cfg.write_wavs and cfg.output_dir:
        wav_dir = Path(cfg.output_dir) / "wav"
    rows = [_score_row(cfg, record, s, masks, q, index, pair, wav_dir) for s in specs]
    return rows, None


def _row_key(row):
    return (row["method"], row["hyper"], row["scenario_id"])


@dataclass
class ResultTable:
    rows: list
    skipped: list = field(default_factory=list)
    config: dict | None = None

    def __len__(self):
        return len(self.rows)

    def sorted(self) -> "ResultTable":
        return ResultTable(sorted(self.rows, key=_row_key), list(self.skipped), self.config)

    def metric_columns(self) -> list[str]:
        return [k for k in METRIC_KEYS if any(k in r for r in self.rows)]

    def aggregate(self) -> list[dict]:
        """Mean of each metric over scenarios, per (method, hyperparameter)."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r["method"], r["hyper"]), []).append(r)
        out = []
        for (method, hyper), rs in sorted(groups.items()):
            agg = {"method": method, "hyper": hyper, "num_scenarios": len(rs),
                   "mean_selected": float(np.mean([r["num_selected"] for r in rs]))}
            for k in self.metric_columns():
                vals = [r[k] for r in rs if r.get(k) is not None]
                agg[k] = float(np.mean(vals)) if vals else None
            out.append(agg)
        return out

    def mean(self, method: str, metric: str = "si_sdr", hyper: str | None = None) -> float:
        vals = [r[metric] for r in self.rows
                if r["method"] == method and (hyper is None or r["hyper"] == hyper)
                and r.get(metric) is not None]
        if not vals:
            raise KeyError(f"no {metric} values for {method} {hyper or ''}")
        return float(np.mean(vals))

    def to_csv(self, path=None) -> str:
        cols = ["scenario_id", "scenario_seed", "method", "hyper", "gender_pair",
                "num_selected", "reference_channel"] + self.metric_columns()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in sorted(self.rows, key=_row_key):
            w.writerow({k: ("" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                        for k in cols})
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_json(self, path=None) -> str:
        doc = {"rows": sorted(self.rows, key=_row_key), "aggregate": self.aggregate(),
               "skipped": self.skipped}
        if self.config is not None:
            doc["config"] = self.config
        text = json.dumps(doc, indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _worker(args):
    cfg_dict, index, specs = args
    return index, run_scenario(ExperimentConfig.from_dict(cfg_dict), index, specs)


def _run(cfg: ExperimentConfig, specs: list[MethodSpec]) -> ResultTable:
    jobs = [(cfg.to_dict(), i, specs) for i in range(cfg.num_scenarios)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    rows, skipped = [], []
    for _, (r, reason) in sorted(results, key=lambda x: x[0]):
        if r is None:
            log.warning("skipping %s", reason)
            skipped.append(reason)
        else:
            rows.extend(r)
    if not rows:
        raise ExperimentError(f"every scenario was skipped: {skipped[:3]}")
    return ResultTable(rows, skipped, cfg.to_dict()).sorted()


def _write_outputs(cfg: ExperimentConfig, table: ResultTable, stem: str = "results",
                   sweep_param: str | None = None):
    if not cfg.output_dir:
        return
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / f"{stem}.csv")
    table.to_json(out / f"{stem}.json")
    if cfg.plots or sweep_param is not None:
        plot_table(table, out, stem, sweep_param)


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    table = _run(cfg, method_specs(cfg))
    _write_outputs(cfg, table)
    return table


def sweep_n(cfg: ExperimentConfig, n_values) -> ResultTable:
    n_values = [int(n) for n in n_values]
    for n in n_values:
        if not 1 <= n <= cfg.num_mics:
            raise ValueError(f"n = {n} outside [1, {cfg.num_mics}]")
    specs = [MethodSpec("dabse+fixed-n", n=n) for n in n_values]
    table = _run(cfg, specs)
    _write_outputs(cfg, table, "sweep_n", "n")
    return table


def sweep_gamma(cfg: ExperimentConfig, gamma_values) -> ResultTable:
    gamma_values = [float(g) for g in gamma_values]
    for g in gamma_values:
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"gamma = {g} outside [0, 1]")
    specs = [MethodSpec(m, gamma=g) for m in ("dabse+auto-n", "dabse+soft-n") for g in gamma_values]
    table = _run(cfg, specs)
    _write_outputs(cfg, table, "sweep_gamma", "gamma")
    return table


def _hyper_value(hyper: str) -> float:
    return float(hyper.split("=", 1)[1])


def plot_table(table: ResultTable, out_dir, stem: str, sweep_param: str | None = None) -> list[str]:
    """One PNG per metric: a curve per method over the swept value, or bars per method."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib is not installed; skipping plots")
        return []
    agg = table.aggregate()
    paths = []
    for metric in table.metric_columns():
        fig, ax = plt.subplots(figsize=(5, 3.2))
        if sweep_param is not None:
            for method in sorted({a["method"] for a in agg}):
                pts = sorted((_hyper_value(a["hyper"]), a[metric]) for a in agg
                             if a["method"] == method and a[metric] is not None)
                if pts:
                    ax.plot(*zip(*pts), marker="o", label=method)
            ax.set_xlabel(sweep_param)
            ax.legend(fontsize=7)
        else:
            labels = [a["method"] + (f" {a['hyper']}" if a["hyper"] else "") for a in agg]
            ax.bar(range(len(agg)), [a[metric] or 0.0 for a in agg])
            ax.set_xticks(range(len(agg)), labels, rotation=30, ha="right", fontsize=7)
        ax.set_ylabel(metric)
        fig.tight_layout()
        p = Path(out_dir) / f"{stem}_{metric}.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        paths.append(str(p))
    return paths


# -- record persistence for the step-by-step CLI -------------------------------------

def save_record(record: MixtureRecord, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record.scenario.to_json(out / "scenario.json")
    files = {}
    for key in ("mixture", "target_image", "interf_image", "target_direct", "interf_direct"):
        names = []
        for j, w in enumerate(getattr(record, key)):
            name = f"{key}_{j:02d}.wav"
            write_wav(out / name, w)
            names.append(name)
        files[key] = names
    for key in ("target_dry", "interf_dry"):
        w = getattr(record, key)
        if w is not None:
            write_wav(out / f"{key}.wav", w)
            files[key] = f"{key}.wav"
    manifest = {"scenario": "scenario.json", "sample_rate": record.sample_rate, "files": files}
    (out / "record.json").write_text(json.dumps(manifest, indent=1))
    return out / "record.json"


def load_record(path) -> MixtureRecord:
    path = Path(path)
    if path.is_dir():
        path = path / "record.json"
    base = path.parent
    doc = json.loads(path.read_text())
    files = doc["files"]

    def waves(key):
        return [read_wav(base / n) for n in files.get(key, [])]

    def one(key):
        return read_wav(base / files[key]) if key in files else None

    return MixtureRecord(
        scenario=Scenario.from_json(base / doc["scenario"]),
        mixture=waves("mixture"),
        target_image=waves("target_image"),
        interf_image=waves("interf_image"),
        target_direct=waves("target_direct"),
        interf_direct=waves("interf_direct"),
        target_dry=one("target_dry"),
        interf_dry=one("interf_dry"),
    )
