"""Command-line pipeline: train, generate, uq, detect, report.

Every subcommand reads one TOML/JSON config, resolves it (CLI overrides,
absolute input paths, output directory) and writes the resolved config to
``config.json`` next to its outputs.  Rerunning a subcommand from that
snapshot reproduces its CSVs bit for bit.

Exit codes: 0 ok, 1 runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
import time
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .data import (SCENARIOS, DatasetSpec, apply_shift, detection_pool, load_dataset_csv, make_dataset,
                   save_dataset_csv, scenario_conditions, scenario_shift, source_sampler)
from .detect import FILTER_MODES, ID, OOD, FilterPolicy, aupr, auroc, filter_pool, seed_summary
from .errors import ConfigError
from .eval import energy_distance, metric_report, nearest_sq_distance
from .interpolant import InterpolantConfig
from .nets import MlpConfig, load_checkpoint, save_checkpoint
from .numkit import RngStream
from .posterior import MapSampler, McDropoutSampler
from .sample import SdeConfig, SolveCounter, iid_paths, ode_solve, sde_solve, write_trajectory_csv
from .svg import histogram_svg, line_svg
from .train import TrainConfig, fit
from .uq import UqBudget, avuq, map_aleatoric, mcd_dfm_epistemic, nested_iid

OUTPUT_ROOT_ENV = "SFMLAB_OUTPUT_ROOT"
COMMANDS = ("train", "generate", "uq", "detect", "report")
UQ_METHODS = ("avuq", "mcd_iid", "map", "mcd_dfm")
ERROR_METRICS = ("energy", "nearest_sq")

SECTION_KEYS = {
    "dataset": {f.name for f in dc_fields(DatasetSpec)},
    "model": {"hidden_widths", "time_embed_dim", "dropout_rate", "cond_embed_dim", "activation",
              "condition_embedding"},
    "interpolant": {"a", "t_min"},
    "train": {"lambda", "p_c", "batch_size", "epochs", "learning_rate", "beta1", "beta2", "eps"},
    "sde": {f.name for f in dc_fields(SdeConfig)},
    "generate": {"checkpoint", "scenario", "severities", "n", "mode", "dump_trajectories"},
    "uq": {"checkpoint", "scenario", "severity", "method", "M", "K", "n_id", "n_ood", "score_sign",
           "error_metric"},
    "detect": {"uq_csv", "labels", "seeds", "filter", "svg", "scenario"},
    "report": {"inputs"},
}
TOP_KEYS = {"seed", "output_dir"} | set(SECTION_KEYS)

DEFAULTS = {
    "seed": 0,
    "output_dir": "runs/default",
    "model": {"hidden_widths": [64, 64], "time_embed_dim": 4, "dropout_rate": 0.1, "cond_embed_dim": 8,
              "activation": "silu", "condition_embedding": "features"},
    "interpolant": {"a": 0.1, "t_min": 0.05},
    "train": {"lambda": 1.0, "p_c": 0.1, "batch_size": 256, "epochs": 200, "learning_rate": 1e-3,
              "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "sde": {"steps": 100, "sigma_max": 0.5, "sigma_shape": "sin", "guidance_alpha": 1.0,
            "correction": "marginal"},
    "generate": {"scenario": "unseen_intensity", "severities": [0.0, 0.25, 0.5, 1.0], "n": 500,
                 "mode": "sde", "dump_trajectories": 0},
    "uq": {"scenario": "intensity", "severity": 1.0, "method": "avuq", "M": 4, "K": 4, "n_id": 100,
           "n_ood": 100, "score_sign": -1.0, "error_metric": "energy"},
    "detect": {"filter": "half_sigma", "svg": True, "scenario": ""},
    "report": {},
}


def warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------- config

def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                cfg = tomllib.load(f)
        elif path.suffix == ".json":
            cfg = json.loads(path.read_text())
        else:
            raise ConfigError(f"config must be .toml or .json, got {path.name}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    validate_keys(cfg)
    return cfg


def validate_keys(cfg: dict):
    for key, val in cfg.items():
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if key in SECTION_KEYS:
            if not isinstance(val, dict):
                raise ConfigError(f"config key {key!r} must be a table")
            for sub in val:
                if sub not in SECTION_KEYS[key]:
                    raise ConfigError(f"unknown config key '{key}.{sub}'")


def resolve(cfg: dict, command: str, out_override: str | None, base: Path) -> dict:
    """Fill defaults, make input paths absolute and fix the output directory."""
    if "dataset" not in cfg:
        raise ConfigError("config has no 'dataset' section; a dataset spec or dataset path is required")
    res = copy.deepcopy(DEFAULTS)
    for key, val in cfg.items():
        if isinstance(val, dict):
            res.setdefault(key, {}).update(copy.deepcopy(val))
        else:
            res[key] = val
    res["dataset"] = dict(cfg["dataset"])

    if out_override is not None:
        out = Path(out_override)
    else:
        out = Path(res["output_dir"])
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        elif not out.is_absolute():
            out = base / out
    res["output_dir"] = str(out.resolve())
    run_root = Path(res["output_dir"])

    def absolute(p):
        p = Path(p)
        return str(p if p.is_absolute() else (base / p).resolve())

    if "path" in res["dataset"]:
        res["dataset"]["path"] = absolute(res["dataset"]["path"])
        if not Path(res["dataset"]["path"]).exists():
            raise ConfigError(f"dataset path {res['dataset']['path']} does not exist")
    for sec in ("generate", "uq"):
        ck = res[sec].get("checkpoint")
        res[sec]["checkpoint"] = absolute(ck) if ck else str(run_root / "train" / "model.ckpt")
    det = res["detect"]
    det["uq_csv"] = [absolute(p) for p in det.get("uq_csv", [str(run_root / "uq" / "uq.csv")])]
    det["labels"] = [absolute(p) for p in det.get("labels", [str(Path(p).with_name("labels.csv"))
                                                             for p in det["uq_csv"]])]
    rep = res["report"]
    rep["inputs"] = [absolute(p) for p in rep.get("inputs", [str(run_root)])]
    return res


def _build(cls, section: str, values: dict):
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"bad value in [{section}]: {e}") from e


def dataset_spec(cfg: dict) -> DatasetSpec:
    d = dict(cfg["dataset"])
    d.setdefault("seed", cfg["seed"])
    if "withheld" in d:
        d["withheld"] = tuple(d["withheld"])
    return _build(DatasetSpec, "dataset", d)


def get_dataset(cfg: dict):
    spec = dataset_spec(cfg)
    if spec.path:
        return load_dataset_csv(spec.path, spec)
    return make_dataset(spec)


def net_config(cfg: dict, spec: DatasetSpec) -> MlpConfig:
    m = dict(cfg["model"])
    emb = m.pop("condition_embedding")
    if emb not in ("features", "onehot"):
        raise ConfigError("model.condition_embedding must be 'features' or 'onehot'")
    feats = tuple(map(tuple, spec.condition_features())) if emb == "features" else None
    m["hidden_widths"] = tuple(m["hidden_widths"])
    return _build(MlpConfig, "model", dict(input_dim=spec.d, condition_count=spec.condition_count,
                                           condition_features=feats, **m))


def sde_config(cfg: dict) -> SdeConfig:
    return _build(SdeConfig, "sde", cfg["sde"])


def model_sections(cfg: dict) -> dict:
    return {k: cfg[k] for k in ("seed", "dataset", "model", "interpolant", "train")}


def prepare_out(cfg: dict, command: str) -> Path:
    out = Path(cfg["output_dir"]) / command
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return out


def _f(v) -> str:
    return "" if v is None else repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def load_nets(path):
    if not Path(path).exists():
        raise ConfigError(f"checkpoint {path} not found; run 'sfmlab train' first or set checkpoint")
    return load_checkpoint(path)


# ---------------------------------------------------------------- commands

def cmd_train(cfg: dict) -> int:
    ds = get_dataset(cfg)
    spec = ds.spec
    vcfg = net_config(cfg, spec)
    icfg = _build(InterpolantConfig, "interpolant", cfg["interpolant"])
    tvals = dict(cfg["train"])
    tvals["lam"] = tvals.pop("lambda")
    tcfg = _build(TrainConfig, "train", dict(tvals, seed=cfg["seed"]))
    out = prepare_out(cfg, "train")
    start = time.perf_counter()
    res = fit(ds, tcfg, vcfg, vcfg, icfg, rng=RngStream(cfg["seed"]).split("train"), loss_csv=out / "loss.csv")
    wall = time.perf_counter() - start
    last = res.history[-1]
    meta = {"epochs": tcfg.epochs, "final_velocity_loss": last.velocity_loss, "final_score_loss": last.score_loss,
            "mask_rate": res.mask_rate, "n_train": int(len(ds.x0)), "seed": cfg["seed"]}
    save_checkpoint(out / "model.ckpt", res.velocity, res.score, config=model_sections(cfg), metadata=meta)
    save_dataset_csv(out / "dataset.csv", ds)
    ep = [r.epoch for r in res.history]
    line_svg(out / "loss.svg", ep, {"velocity": [r.velocity_loss for r in res.history]},
             title="training loss", xlabel="epoch", ylabel="velocity loss")
    (out / "run.json").write_text(json.dumps({"wall_clock_s": wall}, indent=2) + "\n")
    print(f"trained {tcfg.epochs} epochs in {wall:.1f}s; velocity loss {res.history[0].velocity_loss:.4f} "
          f"-> {last.velocity_loss:.4f}; outputs in {out}")
    return 0


def cmd_generate(cfg: dict) -> int:
    g = cfg["generate"]
    if g["mode"] not in ("ode", "sde"):
        raise ConfigError("generate.mode must be 'ode' or 'sde'")
    if g["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {g['scenario']!r}; choose from {SCENARIOS}")
    if int(g["n"]) < 1:
        raise ConfigError("generate.n must be >= 1")
    ds = get_dataset(cfg)
    spec = ds.spec
    vnet, snet, _ = load_nets(g["checkpoint"])
    sde = sde_config(cfg)
    fields = MapSampler(vnet, snet).fields(None, sde.guidance_alpha)
    conds = scenario_conditions(spec, g["scenario"])
    out = prepare_out(cfg, "generate")
    data_rng = RngStream(cfg["seed"]).split("data").split("generate")
    sample_rng = RngStream(cfg["seed"]).split("sample").split("generate")
    n = int(g["n"])
    sample_rows, metric_rows = [], []
    dumped = False
    for sev in g["severities"]:
        sev = float(sev)
        shift = scenario_shift(g["scenario"], sev)
        gen, ref = [], []
        for cc in conds:
            key = (g["scenario"], sev, cc)
            x0 = apply_shift(source_sampler(spec), shift)(data_rng.split(key), n)
            record = int(g["dump_trajectories"]) > 0 and not dumped
            if g["mode"] == "ode":
                traj = ode_solve(fields, x0, cc, sde, record=record)
            else:
                path = iid_paths(sample_rng.split(key), n, sde.steps, spec.d)
                traj = sde_solve(fields, x0, cc, path, sde, record=record)
            if record:
                for i in range(min(int(g["dump_trajectories"]), n)):
                    write_trajectory_csv(out / f"trajectory_{i}.csv", traj, i)
                dumped = True
            gen.append(traj.terminal)
            ref.append(ds.holdout[cc])
            for i, x in enumerate(traj.terminal):
                sample_rows.append([g["scenario"], repr(sev), cc, i] + [repr(float(v)) for v in x])
        gen, ref = np.vstack(gen), np.vstack(ref)
        if len(gen) >= 2:
            rep = metric_report(gen, ref)
            fd, ed = rep.frechet, rep.energy
        else:  # a Frechet distance needs a covariance; left empty
            fd, ed = None, energy_distance(gen, ref)
        metric_rows.append([g["scenario"], g["mode"], repr(sev), _f(fd), _f(ed), len(gen), len(ref), cfg["seed"]])
    write_csv(out / "samples.csv", ["scenario", "severity", "condition", "index"] + [f"x{j}" for j in range(spec.d)],
              sample_rows)
    write_csv(out / "metrics.csv", ["scenario", "method", "severity", "frechet", "energy", "n_gen", "n_ref", "seed"],
              metric_rows)
    print(f"wrote {len(sample_rows)} samples and {len(metric_rows)} metric rows to {out}")
    return 0


UQ_HEADER = ["input_id", "condition", "mode", "M", "K", "aleatoric_trace", "epistemic_raw", "epistemic_corrected",
             "score_aleatoric", "score_epistemic"]


def expected_solves(method: str, M: int, K: int) -> int:
    return {"avuq": M * K, "mcd_iid": M * K, "map": K, "mcd_dfm": M}[method]


def cmd_uq(cfg: dict) -> int:
    u = cfg["uq"]
    method, M, K = u["method"], int(u["M"]), int(u["K"])
    if method not in UQ_METHODS:
        raise ConfigError(f"uq.method must be one of {UQ_METHODS}")
    if u["error_metric"] not in ERROR_METRICS:
        raise ConfigError(f"uq.error_metric must be one of {ERROR_METRICS}")
    if float(u["score_sign"]) not in (-1.0, 1.0):
        raise ConfigError("uq.score_sign must be -1 or +1")
    if method == "avuq" and K % 2:
        raise ConfigError(f"avuq needs an even K (antithetic pairs), got K={K}")
    if method in ("avuq", "mcd_iid"):
        budget = UqBudget(M, K, antithetic=(method == "avuq"))
    elif method == "map":
        if K < 2:
            raise ConfigError("map needs K >= 2")
        if M != 1:
            warn(f"method 'map' ignores M={M}; performing K={K} solves per input")
    elif M < 2:
        raise ConfigError("mcd_dfm needs M >= 2")
    ds = get_dataset(cfg)
    spec = ds.spec
    vnet, snet, _ = load_nets(u["checkpoint"])
    sde = sde_config(cfg)
    pool = detection_pool(ds, u["scenario"], float(u["severity"]), int(u["n_id"]), int(u["n_ood"]),
                          RngStream(cfg["seed"]).split("data").split("pool"))
    out = prepare_out(cfg, "uq")
    root = RngStream(cfg["seed"])
    counter = SolveCounter()
    sign = float(u["score_sign"])
    n = len(pool.x0)
    start = time.perf_counter()
    rows = []
    if method in ("avuq", "mcd_iid"):
        sampler = McDropoutSampler(vnet, snet)
        fn = avuq if method == "avuq" else nested_iid
        reports = fn(pool.x0, pool.c, sampler, budget, root, sde, counter, sign)
        for i, r in enumerate(reports):
            rows.append([i, int(pool.c[i]), r.mode, M, K, _f(r.aleatoric_trace), _f(r.epistemic_trace_raw),
                         _f(r.epistemic_trace_corrected), _f(r.score_aleatoric), _f(r.score_epistemic)])
        n_negative = sum(r.corrected_negative for r in reports)
        if n_negative:
            warn(f"{n_negative} inputs have a negative corrected epistemic trace (reported as-is)")
    elif method == "map":
        scores = map_aleatoric(pool.x0, pool.c, MapSampler(vnet, snet), K, root, sde, counter, sign)
        for i, s in enumerate(np.atleast_1d(scores)):
            rows.append([i, int(pool.c[i]), "map", 1, K, _f(s / sign * spec.d), "", "", _f(s), ""])
    else:
        scores = mcd_dfm_epistemic(pool.x0, pool.c, McDropoutSampler(vnet, snet), M, root, sde, counter, sign)
        for i, s in enumerate(np.atleast_1d(scores)):
            rows.append([i, int(pool.c[i]), "mcd_dfm", M, "", "", _f(s / sign), "", "", _f(s)])
    wall = time.perf_counter() - start
    per_input = expected_solves(method, M, K)
    if counter.total != per_input * n:
        raise RuntimeError(f"solve accounting mismatch: {counter.total} solves for {n} inputs, "
                           f"expected {per_input} each")
    write_csv(out / "uq.csv", UQ_HEADER, rows)

    # error metric from one MAP SDE sample per input (independent of the scores)
    label_rng = root.split("sample").split("labels")
    fields = MapSampler(vnet, snet).fields(None, sde.guidance_alpha)
    term = sde_solve(fields, pool.x0, pool.c, iid_paths(label_rng, n, sde.steps, spec.d), sde).terminal
    metric = energy_distance if u["error_metric"] == "energy" else nearest_sq_distance
    label_rows = [[i, pool.provenance[i], _f(metric(term[i][None, :], ds.holdout[int(pool.c[i])]))]
                  for i in range(n)]
    write_csv(out / "labels.csv", ["input_id", "provenance", "error_metric"], label_rows)
    run = {"method": method, "M": M if method != "map" else 1, "K": K if method != "mcd_dfm" else None,
           "n_inputs": n, "solves_per_input": per_input, "solves_total": counter.total,
           "ode_solves": counter.ode, "sde_solves": counter.sde, "wall_clock_s": wall}
    (out / "run.json").write_text(json.dumps(run, indent=2) + "\n")
    print(f"{method}: {n} inputs, {per_input} solves each, {wall:.1f}s; outputs in {out}")
    return 0


SCORE_NAMES = {"antithetic": "avuq", "iid": "mcd_iid", "map": "map", "mcd_dfm": "mcd_dfm"}


def _run_meta(path: Path, cfg: dict, idx: int) -> tuple[str, int]:
    snap = path.with_name("config.json")
    seeds = cfg["detect"].get("seeds")
    scenario, seed = cfg["detect"]["scenario"], idx
    if snap.exists():
        meta = json.loads(snap.read_text())
        seed = meta.get("seed", seed)
        scenario = scenario or meta.get("uq", {}).get("scenario", "")
    if seeds is not None:
        seed = seeds[idx]
    return scenario or "unknown", int(seed)


def cmd_detect(cfg: dict) -> int:
    det = cfg["detect"]
    policy = _build(FilterPolicy, "detect", {"mode": det["filter"]})
    if len(det["uq_csv"]) != len(det["labels"]):
        raise ConfigError("detect.uq_csv and detect.labels need the same number of entries")
    if det.get("seeds") is not None and len(det["seeds"]) != len(det["uq_csv"]):
        raise ConfigError("detect.seeds needs one entry per uq_csv")
    out = prepare_out(cfg, "detect")
    metric_rows = []
    collected: dict[tuple, list] = {}
    hist: dict[str, dict[str, list]] = {}
    for idx, (uq_path, lab_path) in enumerate(zip(det["uq_csv"], det["labels"])):
        for p in (uq_path, lab_path):
            if not Path(p).exists():
                raise ConfigError(f"detect input {p} not found")
        scenario, seed = _run_meta(Path(uq_path), cfg, idx)
        uq_rows = read_csv(uq_path)
        labels = {r["input_id"]: r for r in read_csv(lab_path)}
        missing = [r["input_id"] for r in uq_rows if r["input_id"] not in labels]
        if missing:
            raise ConfigError(f"labels missing for input ids {missing[:20]}{' ...' if len(missing) > 20 else ''}")
        ids = [r["input_id"] for r in uq_rows]
        prov = np.array([labels[i]["provenance"] for i in ids])
        errors = np.array([float(labels[i]["error_metric"]) for i in ids])
        filt = filter_pool(errors, prov, policy)
        method = SCORE_NAMES.get(uq_rows[0]["mode"], uq_rows[0]["mode"]) if uq_rows else "unknown"
        for part in ("aleatoric", "epistemic"):
            col = [r[f"score_{part}"] for r in uq_rows]
            if any(v == "" for v in col):
                continue
            scores = np.array([float(v) for v in col])
            name = f"{method}_{part}"
            kept_s, kept_l = scores[filt.keep], filt.labels
            n_id, n_ood = int(np.sum(kept_l == ID)), int(np.sum(kept_l == OOD))
            if filt.degenerate:
                warn(f"{name} seed {seed}: filtering left a single class; metrics skipped")
                a = p = None
            else:
                a, p = auroc(kept_s, kept_l), aupr(kept_s, kept_l)
                collected.setdefault((scenario, name), []).append((a, p))
            metric_rows.append([scenario, name, policy.mode, _f(a), _f(p), n_id, n_ood, seed])
            h = hist.setdefault(f"{scenario}_{name}", {ID: [], OOD: []})
            h[ID].extend(kept_s[kept_l == ID])
            h[OOD].extend(kept_s[kept_l == OOD])
    write_csv(out / "detect_metrics.csv",
              ["scenario", "score_type", "filter_mode", "auroc", "aupr", "n_id", "n_ood", "seed"], metric_rows)
    summary = []
    for (scenario, name), vals in collected.items():
        am, ase = seed_summary([v[0] for v in vals])
        pm, pse = seed_summary([v[1] for v in vals])
        summary.append([scenario, name, policy.mode, len(vals), _f(am), _f(ase), _f(pm), _f(pse)])
    write_csv(out / "detect_summary.csv",
              ["scenario", "score_type", "filter_mode", "n_seeds", "auroc_mean", "auroc_se", "aupr_mean", "aupr_se"],
              summary)
    if det["svg"]:
        for key, groups in hist.items():
            if groups[ID] or groups[OOD]:
                histogram_svg(out / f"hist_{key}.svg", groups, title=key.replace("_", " "))
    print(f"wrote {len(metric_rows)} detection rows to {out}")
    return 0


def cmd_report(cfg: dict) -> int:
    out = prepare_out(cfg, "report")
    names = ("metrics.csv", "detect_summary.csv", "detect_metrics.csv")
    lines = ["# sfmlab report", ""]
    combined = []
    for inp in cfg["report"]["inputs"]:
        root = Path(inp)
        if not root.exists():
            raise ConfigError(f"report input {inp} not found")
        for p in sorted(root.rglob("*.csv")):
            if p.name not in names or out in p.parents:
                continue
            rows = read_csv(p)
            rel = str(p.relative_to(root))
            lines += [f"## {rel}", ""]
            if rows:
                cols = list(rows[0])
                lines.append("| " + " | ".join(cols) + " |")
                lines.append("|" + "---|" * len(cols))
                for r in rows:
                    lines.append("| " + " | ".join(r[c] for c in cols) + " |")
                    combined.append([rel] + [f"{c}={r[c]}" for c in cols])
            lines.append("")
        loss = sorted(root.rglob("loss.csv"))
        for p in loss:
            rows = read_csv(p)
            if rows:
                lines += [f"## {p.relative_to(root)}", "",
                          f"velocity loss {rows[0]['velocity_loss']} (epoch 0) -> "
                          f"{rows[-1]['velocity_loss']} (epoch {rows[-1]['epoch']})", ""]
    (out / "report.md").write_text("\n".join(lines) + "\n")
    with open(out / "report.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["source", "fields"])
        for r in combined:
            w.writerow([r[0], ";".join(r[1:])])
    print(f"report with {len(combined)} rows in {out}")
    return 0


HANDLERS = {"train": cmd_train, "generate": cmd_generate, "uq": cmd_uq, "detect": cmd_detect, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sfmlab", description="Stochastic flow matching lab with uncertainty estimates.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="TOML or JSON config (a config.json snapshot works too)")
        p.add_argument("--out", help="output directory (overrides output_dir and $" + OUTPUT_ROOT_ENV + ")")
        p.add_argument("--seed", type=int)
        if name in ("generate", "uq"):
            p.add_argument("--checkpoint")
            p.add_argument("--scenario", choices=SCENARIOS)
        if name == "generate":
            p.add_argument("--mode", choices=("ode", "sde"))
            p.add_argument("--n", type=int)
            p.add_argument("--severity", type=float, action="append", dest="severities")
        if name == "uq":
            p.add_argument("--method", choices=UQ_METHODS)
            p.add_argument("-M", type=int)
            p.add_argument("-K", type=int)
            p.add_argument("--severity", type=float)
        if name == "detect":
            p.add_argument("--uq-csv", action="append")
            p.add_argument("--labels", action="append")
            p.add_argument("--filter", choices=FILTER_MODES)
            p.add_argument("--no-svg", action="store_true")
    return ap


def apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    sec = args.command
    for key in ("checkpoint", "scenario", "mode", "n", "severities", "method", "M", "K", "severity", "filter"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.setdefault(sec, {})[key] = val
    if getattr(args, "uq_csv", None):
        cfg.setdefault("detect", {})["uq_csv"] = args.uq_csv
    if getattr(args, "labels", None):
        cfg.setdefault("detect", {})["labels"] = args.labels
    if getattr(args, "no_svg", False):
        cfg.setdefault("detect", {})["svg"] = False
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        cfg = resolve(apply_overrides(raw, args), args.command, args.out, Path.cwd())
        return HANDLERS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure: report and exit 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
