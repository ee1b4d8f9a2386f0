"""Command-line entry points.

Subcommands compose through files: ``simulate`` writes a record directory,
``weights`` and ``select`` write JSON vectors, ``beamform`` writes a WAV,
``evaluate`` scores it, and ``run`` / ``sweep`` drive whole experiments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .beamforming import DIAG_LOADING, REFERENCE_MODES, STEERING_MODES, beamform_pipeline
from .corpus import SyntheticCorpus
from .errors import AdhocSepError
from .fileio import dump_array, load_masks, read_wav, write_wav
from .metrics import evaluate
from .room import SamplerBounds, mix_scenario, sample_scenario
from .selection import ALGORITHMS, SelectionConfig, SelectionMask
from .weighting import ChannelWeights, noisy_oracle_weights

log = logging.getLogger("adhocsep")


def _cmd_simulate(a):
    bounds = SamplerBounds.from_dict(json.loads(Path(a.sampler).read_text())) if a.sampler else None
    scen = sample_scenario(a.seed, bounds, a.mics)
    if a.target or a.interf:
        if not (a.target and a.interf):
            raise SystemExit("give both --target and --interf, or neither")
        tw, iw = read_wav(a.target), read_wav(a.interf)
    else:
        corpus = SyntheticCorpus(a.seed, a.duration)
        tw, iw = corpus.utterance(0).wave, corpus.utterance(1).wave
    rec = mix_scenario(tw, iw, scen)
    manifest = harness.save_record(rec, a.out)
    print(f"wrote {rec.num_channels}-channel record to {manifest}")
    return 0


def _print_table(values, header):
    print(f"{'channel':>7}  {header}")
    for j, v in enumerate(values):
        print(f"{j:>7}  {v:.4f}")


def _cmd_weights(a):
    rec = harness.load_record(a.record)
    q = noisy_oracle_weights(rec, a.sigma, a.seed, a.mode)
    if a.out:
        q.to_json(a.out)
    _print_table(q.q, "q")
    return 0


def _cmd_select(a):
    q = ChannelWeights.from_json(a.weights)
    mask = SelectionConfig(a.algorithm, a.n, a.gamma).apply(q)
    text = mask.to_json(a.out)
    print(text)
    return 0


def _cmd_beamform(a):
    rec = harness.load_record(a.record)
    sel = SelectionMask.from_json(a.selection) if a.selection else SelectionMask(np.ones(rec.num_channels))
    masks = load_masks(a.masks) if a.masks else harness.oracle_masks(rec, a.mask_target)
    res = beamform_pipeline(rec, sel, masks, steering=a.steering, diag_loading=a.diag_loading,
                            reference=a.reference, return_details=True)
    write_wav(a.out, res.output)
    if a.dump_filter and res.filt is not None:
        dump_array(a.dump_filter, res.filt.weights, kind="mvdr-filter",
                   meta={"selected": res.selected.tolist()})
    if a.dump_cov and res.phi_ii is not None:
        dump_array(a.dump_cov, res.phi_ii.matrices, kind="interference-covariance",
                   meta={"selected": res.selected.tolist()})
    print(json.dumps({"output": a.out, "selected": res.selected.tolist(),
                      "reference_channel": res.reference_channel}))
    return 0


def _cmd_evaluate(a):
    est, ref = read_wav(a.estimate), read_wav(a.reference)
    metrics = a.metrics.split(",")
    rep = evaluate(est, ref, ref.sample_rate, metrics=metrics, pesq_tool=a.pesq_tool)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return 0


def _overrides(a) -> dict:
    return {"output_dir": a.out_dir, "num_scenarios": a.num_scenarios,
            "master_seed": a.seed, "workers": a.workers}


def _load_config(a) -> harness.ExperimentConfig:
    if a.config:
        return harness.ExperimentConfig.from_json(a.config, **_overrides(a))
    d = {k: v for k, v in _overrides(a).items() if v is not None}
    return harness.ExperimentConfig.from_dict(d)


def _print_aggregate(table):
    cols = table.metric_columns()
    print("  ".join([f"{'method':<16}", f"{'hyper':<10}", f"{'sel':>5}"] + [f"{c:>8}" for c in cols]))
    for r in table.aggregate():
        vals = [f"{r[c]:8.3f}" if r[c] is not None else f"{'-':>8}" for c in cols]
        print("  ".join([f"{r['method']:<16}", f"{r['hyper']:<10}", f"{r['mean_selected']:5.2f}"] + vals))
    for reason in table.skipped:
        print(f"skipped: {reason}", file=sys.stderr)


def _cmd_run(a):
    table = harness.run_experiment(_load_config(a))
    _print_aggregate(table)
    return 0


def _cmd_sweep(a):
    cfg = _load_config(a)
    if a.param == "n":
        values = [int(v) for v in a.values.split(",")] if a.values else list(range(2, cfg.num_mics + 1))
        table = harness.sweep_n(cfg, values)
    else:
        values = ([float(v) for v in a.values.split(",")] if a.values
                  else [round(0.1 * k, 1) for k in range(1, 10)])
        table = harness.sweep_gamma(cfg, values)
    _print_aggregate(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adhocsep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample a scenario and render its mixture")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--mics", type=int, default=16)
    s.add_argument("--out", required=True)
    s.add_argument("--target", help="target WAV (default: synthetic speech)")
    s.add_argument("--interf", help="interferer WAV")
    s.add_argument("--duration", type=float, default=3.0)
    s.add_argument("--sampler", help="JSON file with sampler bounds")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("weights", help="oracle channel weights for a record")
    s.add_argument("--record", required=True)
    s.add_argument("--mode", choices=("direct_only", "reverberant"), default="direct_only")
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_weights)

    s = sub.add_parser("select", help="channel selection from a weight vector")
    s.add_argument("--weights", required=True)
    s.add_argument("--algorithm", choices=ALGORITHMS, default="auto-n")
    s.add_argument("--n", type=int)
    s.add_argument("--gamma", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_select)

    s = sub.add_parser("beamform", help="MVDR on the selected channels of a record")
    s.add_argument("--record", required=True)
    s.add_argument("--selection", help="selection mask JSON (default: all channels)")
    s.add_argument("--masks", help="external per-channel masks (.json or .npy, shape W x T x F)")
    s.add_argument("--mask-target", choices=harness.MASK_TARGETS, default="reverberant")
    s.add_argument("--steering", choices=STEERING_MODES, default="target-cov")
    s.add_argument("--reference", choices=REFERENCE_MODES, default="mask-snr")
    s.add_argument("--diag-loading", type=float, default=DIAG_LOADING)
    s.add_argument("--out", required=True)
    s.add_argument("--dump-filter")
    s.add_argument("--dump-cov")
    s.set_defaults(func=_cmd_beamform)

    s = sub.add_parser("evaluate", help="score an estimate against a reference WAV")
    s.add_argument("--estimate", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--metrics", default="si_sdr,sdr,stoi")
    s.add_argument("--pesq-tool")
    s.set_defaults(func=_cmd_evaluate)

    for name, func, helptext in (("run", _cmd_run, "run an experiment"),
                                 ("sweep", _cmd_sweep, "sweep N or gamma")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="experiment JSON")
        s.add_argument("--out-dir")
        s.add_argument("--num-scenarios", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        if name == "sweep":
            s.add_argument("--param", choices=("n", "gamma"), required=True)
            s.add_argument("--values", help="comma-separated grid")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except (AdhocSepError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
