"""Command-line pipeline: simulate, rank, extract, hint, prove, report.

Every stage reads and writes plain files under one output directory, so a
full run is auditable and any stage can be re-run or diffed in isolation:

    out/
      config.json                 resolved configuration echo
      roms.json                   firmware image digests per scenario
      sim/<scenario>.vcd          concrete traces
      rank/<scenario>.json        activity ranking and buckets
      fsm/<module>.<reg>.kiss2    extracted machines (+ .guards sidecar)
      fsm/extraction.json         shape comparison against expected FSMs
      hints/<scenario>.json       candidate hints per spec'd instance
      hints/<scenario>.verified.json
      smt/<key>.<obligation>.smt2 every emitted solver script
      verdicts.json               per-sub-problem outcomes
      report.txt, summary.json    human and machine summaries
      run_meta.json               timestamps and wall times (volatile)

Artifacts other than run_meta.json are byte-identical across reruns with
the same inputs. Exit codes: 0 all Pass, 1 any Fail, 2 any Unknown with
no Fail, 3 configuration or stage infrastructure errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

from concurrent.futures import ThreadPoolExecutor

from .equiv import decompose, check_premises, prove, report_json
from .fsmkit import extract_fsms, write_kiss2
from .hintgen import (
    HintSet,
    hint_generation,
    hints_from_json,
    hints_to_json,
    instance_input_ports,
    path_prioritization,
    verify_hints,
)
from .netlist import FlatDesign, Netlist, flatten, image_digest, load_memory_image, parse_netlist
from .rank import RankedSignal, bucketize, filter_instance, ranking_from_vcd
from .sim import Scenario, load_scenario, resolve_firmware_paths, run_scenario
from .specmodel import SpecModel, load_spec
from .trace import parse_vcd, write_vcd

SOLVER_ENV = "HIVE_SOLVER"
STAGES = ("sim", "rank", "extract-fsm", "gen-hints", "verify-hints", "prove", "report")


class CliError(Exception):
    """Configuration or stage failure; maps to exit code 3."""


@dataclass
class PipelineConfig:
    design: str
    scenario_dir: str
    spec_dir: str
    out_dir: str
    top: str | None = None
    tau: int | None = None  # None: honor each scenario's own threshold
    solver: str | None = None
    budget_s: float = 600.0
    verify_budget_s: float = 60.0
    jobs: int = 1

    def validate(self) -> None:
        if not os.path.isfile(self.design):
            raise CliError(f"design file not found: {self.design}")
        if not os.path.isdir(self.scenario_dir):
            raise CliError(f"scenario directory not found: {self.scenario_dir}")
        if not os.path.isdir(self.spec_dir):
            raise CliError(f"spec directory not found: {self.spec_dir}")
        if self.tau is not None and self.tau < 1:
            raise CliError("tau must be at least 1")
        if self.jobs < 1:
            raise CliError("jobs must be at least 1")
        if self.budget_s <= 0 or self.verify_budget_s <= 0:
            raise CliError("budgets must be positive")


# ---------------------------------------------------------------------------
# Shared loading and writing helpers


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_json(path: str, doc: object) -> None:
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_design(cfg: PipelineConfig) -> tuple[Netlist, FlatDesign, str]:
    with open(cfg.design, "r", encoding="utf-8") as fh:
        net = parse_netlist(fh.read())
    top = cfg.top or net.top()
    if top not in net.modules:
        raise CliError(f"top module {top!r} is not in the design")
    return net, flatten(net, top=top), top


def _load_scenarios(cfg: PipelineConfig) -> list[Scenario]:
    files = sorted(
        os.path.join(cfg.scenario_dir, n)
        for n in os.listdir(cfg.scenario_dir)
        if n.endswith(".json")
    )
    if not files:
        raise CliError(f"no scenario files in {cfg.scenario_dir}")
    out: list[Scenario] = []
    seen: set[str] = set()
    for p in files:
        sc = resolve_firmware_paths(load_scenario(p), os.path.dirname(p))
        if sc.name in seen:
            raise CliError(f"duplicate scenario name {sc.name!r}")
        seen.add(sc.name)
        if cfg.tau is not None:
            sc.tau = cfg.tau
        out.append(sc)
    return out


def _load_specs(cfg: PipelineConfig) -> list[SpecModel]:
    files = sorted(
        os.path.join(cfg.spec_dir, n)
        for n in os.listdir(cfg.spec_dir)
        if n.endswith(".json")
    )
    if not files:
        raise CliError(f"no spec files in {cfg.spec_dir}")
    specs = [load_spec(p) for p in files]
    mods = [s.module for s in specs]
    if len(set(mods)) != len(mods):
        raise CliError("multiple spec files target the same module")
    return specs


def _spec_instances(f: FlatDesign, specs: list[SpecModel]) -> list[tuple[str, str]]:
    """(instance path, module) pairs for every instance of a spec'd module."""
    pairs: list[tuple[str, str]] = []
    for spec in specs:
        paths = f.instance_paths_of_module(spec.module)
        if not paths:
            raise CliError(f"no instance of spec'd module {spec.module!r}")
        pairs.extend((".".join(p), spec.module) for p in paths)
    return sorted(pairs)


def _scenario_images(f: FlatDesign, sc: Scenario) -> dict[str, list[int]]:
    imgs = {}
    for mem, path in sc.firmware.items():
        if mem not in f.mems:
            raise CliError(f"{sc.name}: firmware names unknown memory {mem!r}")
        m = f.mems[mem]
        imgs[mem] = load_memory_image(path, m.width, m.depth)
    return imgs


def _record_meta(cfg: PipelineConfig, stage: str, seconds: float, extra: dict | None = None) -> None:
    """Volatile bookkeeping kept apart so artifact trees stay diffable."""
    path = os.path.join(cfg.out_dir, "run_meta.json")
    meta: dict = {}
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    entry = {"seconds": round(seconds, 3), "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    if extra:
        entry.update(extra)
    meta[stage] = entry
    _write_json(path, meta)


def _safe_label(label: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "-" for c in label)


# ---------------------------------------------------------------------------
# Stages


def stage_sim(cfg: PipelineConfig) -> None:
    net, f, top = _load_design(cfg)
    scenarios = _load_scenarios(cfg)
    roms: dict[str, dict] = {}
    for sc in scenarios:
        trace, _ = run_scenario(f, sc)
        with open(_ensure_dir(cfg, "sim", f"{sc.name}.vcd"), "w", encoding="utf-8") as fh:
            write_vcd(trace, fh)
        roms[sc.name] = {
            mem: {"path": os.path.relpath(p, cfg.scenario_dir), "sha256": image_digest(p)}
            for mem, p in sorted(sc.firmware.items())
        }
    _write_json(os.path.join(cfg.out_dir, "config.json"), {
        "design": cfg.design,
        "scenario_dir": cfg.scenario_dir,
        "spec_dir": cfg.spec_dir,
        "top": top,
        "tau": cfg.tau,
        "solver": cfg.solver,
        "budget_s": cfg.budget_s,
        "verify_budget_s": cfg.verify_budget_s,
        "jobs": cfg.jobs,
    })
    _write_json(os.path.join(cfg.out_dir, "roms.json"), roms)
    print(f"[sim] {len(scenarios)} scenario(s) simulated")


def _ensure_dir(cfg: PipelineConfig, sub: str, name: str) -> str:
    d = os.path.join(cfg.out_dir, sub)
    os.makedirs(d, exist_ok=True)
    return os.path.join(d, name)


def _rank_doc(ranked: list[RankedSignal], tau: int) -> dict:
    return {
        "tau": tau,
        "ranked": [
            {"name": r.name, "changes": r.changes, "unknown": r.unknown} for r in ranked
        ],
        "buckets": bucketize(ranked, tau),
    }


def stage_rank(cfg: PipelineConfig) -> None:
    scenarios = _load_scenarios(cfg)
    for sc in scenarios:
        vcd = os.path.join(cfg.out_dir, "sim", f"{sc.name}.vcd")
        if not os.path.exists(vcd):
            raise CliError(f"missing {vcd}; run the sim stage first")
        ranked = ranking_from_vcd(vcd)
        doc = _rank_doc(ranked, sc.tau)
        doc["scenario"] = sc.name
        _write_json(_ensure_dir(cfg, "rank", f"{sc.name}.json"), doc)
    print(f"[rank] {len(scenarios)} ranking report(s)")


def stage_extract_fsm(cfg: PipelineConfig) -> None:
    net, _, _ = _load_design(cfg)
    specs = _load_specs(cfg)
    rows = []
    mismatched = []
    for spec in specs:
        fproj = flatten(net, top=spec.module)
        fsms = extract_fsms(fproj)
        expected = spec.expected_fsm_model()
        matched = None
        for reg, fsm in sorted(fsms.items()):
            kiss, guards = write_kiss2(fsm)
            base = _ensure_dir(cfg, "fsm", f"{spec.module}.{reg.replace('.', '_')}.kiss2")
            _write_text(base, kiss)
            _write_text(base + ".guards", guards)
            same = expected.same_shape(fsm) if expected is not None else None
            if same:
                matched = reg
            rows.append({
                "module": spec.module,
                "register": reg,
                "states": sorted(fsm.states),
                "transitions": len(fsm.transitions),
                "matches_expected": same,
            })
        if expected is not None and matched is None:
            mismatched.append(spec.module)
    _write_json(os.path.join(cfg.out_dir, "fsm", "extraction.json"), rows)
    if mismatched:
        raise CliError(
            "extracted FSMs do not match the expected shape for: "
            + ", ".join(sorted(mismatched))
        )
    print(f"[extract-fsm] {len(rows)} machine(s) written")


def _ranked_from_doc(doc: dict) -> list[RankedSignal]:
    return [
        RankedSignal(r["name"], int(r["changes"]), bool(r["unknown"]))
        for r in doc["ranked"]
    ]


def stage_gen_hints(cfg: PipelineConfig) -> None:
    net, f, _ = _load_design(cfg)
    specs = _load_specs(cfg)
    scenarios = _load_scenarios(cfg)
    fsms = extract_fsms(f)
    pairs = _spec_instances(f, specs)
    for sc in scenarios:
        vcd = os.path.join(cfg.out_dir, "sim", f"{sc.name}.vcd")
        rank_path = os.path.join(cfg.out_dir, "rank", f"{sc.name}.json")
        for need in (vcd, rank_path):
            if not os.path.exists(need):
                raise CliError(f"missing {need}; run earlier stages first")
        with open(vcd, "r", encoding="utf-8") as fh:
            trace = parse_vcd(fh)
        with open(rank_path, "r", encoding="utf-8") as fh:
            ranked = _ranked_from_doc(json.load(fh))
        sets = []
        for inst, _mod in pairs:
            rinst = filter_instance(ranked, inst)
            ports = instance_input_ports(net, f, inst)
            hs = hint_generation(
                f, trace, rinst, fsms, sc.tau,
                scenario=sc.name, instance=inst, ports=ports,
            )
            inst_fsms = {r: m for r, m in fsms.items() if r.startswith(inst + ".")}
            path_prioritization(inst_fsms, trace, hs)
            sets.append(json.loads(hints_to_json(hs)))
        _write_json(
            _ensure_dir(cfg, "hints", f"{sc.name}.json"),
            {"scenario": sc.name, "sets": sets},
        )
    print(f"[gen-hints] hints proposed for {len(scenarios)} scenario(s)")


def stage_verify_hints(cfg: PipelineConfig) -> None:
    _, f, _ = _load_design(cfg)
    scenarios = _load_scenarios(cfg)
    n_verified = n_rejected = 0
    for sc in scenarios:
        cand_path = os.path.join(cfg.out_dir, "hints", f"{sc.name}.json")
        if not os.path.exists(cand_path):
            raise CliError(f"missing {cand_path}; run the gen-hints stage first")
        with open(cand_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        imgs = _scenario_images(f, sc)
        out_sets = []
        for set_doc in doc["sets"]:
            hs = hints_from_json(json.dumps(set_doc))
            vhs = verify_hints(
                hs, f,
                run_cycles=sc.run_cycles,
                stimulus=sc.stimulus,
                images=imgs,
                solver=cfg.solver,
                timeout_s=cfg.verify_budget_s,
            )
            n_verified += sum(1 for h in vhs.hints if h.status == "verified")
            n_rejected += sum(1 for h in vhs.hints if h.status == "rejected")
            out_sets.append(json.loads(hints_to_json(vhs)))
        _write_json(
            _ensure_dir(cfg, "hints", f"{sc.name}.verified.json"),
            {"scenario": sc.name, "sets": out_sets},
        )
    print(f"[verify-hints] {n_verified} verified, {n_rejected} rejected")


def _load_verified_hintsets(cfg: PipelineConfig, scenarios: list[Scenario]) -> dict[tuple[str, str], HintSet]:
    out: dict[tuple[str, str], HintSet] = {}
    for sc in scenarios:
        path = os.path.join(cfg.out_dir, "hints", f"{sc.name}.verified.json")
        if not os.path.exists(path):
            raise CliError(f"missing {path}; run the verify-hints stage first")
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        for set_doc in doc["sets"]:
            hs = hints_from_json(json.dumps(set_doc))
            out[(hs.scenario, hs.instance)] = hs
    return out


def stage_prove(cfg: PipelineConfig) -> None:
    net, f, _ = _load_design(cfg)
    specs = _load_specs(cfg)
    scenarios = _load_scenarios(cfg)
    hint_sets = _load_verified_hintsets(cfg, scenarios)
    subs = decompose(net, f, specs, scenarios, hint_sets)

    os.makedirs(os.path.join(cfg.out_dir, "smt"), exist_ok=True)
    sink_locks: set[str] = set()

    def make_sink(key: str):
        def sink(label: str, script: str) -> None:
            name = f"{key}.{_safe_label(label)}.smt2"
            if name in sink_locks:  # one obligation, one script
                return
            sink_locks.add(name)
            _write_text(os.path.join(cfg.out_dir, "smt", name), script)

        return sink

    kw = dict(solver=cfg.solver, timeout_s=cfg.budget_s)
    if cfg.jobs <= 1:
        results = [prove(sub, net, script_sink=make_sink(sub.key), **kw) for sub in subs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futs = [
                pool.submit(prove, sub, net, script_sink=make_sink(sub.key), **kw)
                for sub in subs
            ]
            results = [f.result() for f in futs]
    results, audit = check_premises(results)

    doc = report_json(results, meta={"premise_audit": audit})
    timings = {}
    for row in doc["results"]:
        timings[f"{row['module']}[{'+'.join(row['scenarios'])}]@{row['key'][:8]}"] = row.pop("seconds")
    _write_json(os.path.join(cfg.out_dir, "verdicts.json"), doc)
    _record_meta(cfg, "prove", sum(timings.values()), {"sub_seconds": timings})
    s = doc["summary"]
    print(f"[prove] {s['total']} sub-problem(s): {s['pass']} pass, {s['fail']} fail, {s['unknown']} unknown")


def stage_report(cfg: PipelineConfig) -> int:
    path = os.path.join(cfg.out_dir, "verdicts.json")
    if not os.path.exists(path):
        raise CliError(f"missing {path}; run the prove stage first")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    rows = doc["results"]
    width = max((len(f"{r['module']}[{'+'.join(r['scenarios'])}]@{r['depth']}") for r in rows), default=10)
    lines = []
    for r in rows:
        name = f"{r['module']}[{'+'.join(r['scenarios'])}]@{r['depth']}"
        lines.append(f"{name:<{width}}  {r['status']:<7}  {r['reason']}")
    s = doc["summary"]
    lines.append(
        f"{s['total']} sub-problems: {s['pass']} pass, {s['fail']} fail, {s['unknown']} unknown"
    )
    text = "\n".join(lines) + "\n"
    _write_text(os.path.join(cfg.out_dir, "report.txt"), text)
    _write_json(os.path.join(cfg.out_dir, "summary.json"), {
        "total": s["total"],
        "pass": s["pass"],
        "fail": s["fail"],
        "unknown": s["unknown"],
        "exit_code": _code_of(s),
        "failures": [
            {
                "module": r["module"],
                "scenarios": r["scenarios"],
                "obligation": r["obligation"],
                "reason": r["reason"],
            }
            for r in rows if r["status"] == "Fail"
        ],
    })
    sys.stdout.write(text)
    return _code_of(s)


def _code_of(summary: dict) -> int:
    if summary["fail"]:
        return 1
    if summary["unknown"]:
        return 2
    return 0


_STAGE_FUNCS = {
    "sim": stage_sim,
    "rank": stage_rank,
    "extract-fsm": stage_extract_fsm,
    "gen-hints": stage_gen_hints,
    "verify-hints": stage_verify_hints,
    "prove": stage_prove,
    "report": stage_report,
}


def run_pipeline(cfg: PipelineConfig) -> int:
    """All stages in order; equivalent to running each subcommand."""
    cfg.validate()
    code = 0
    for stage in STAGES:
        t0 = time.monotonic()
        try:
            rc = _STAGE_FUNCS[stage](cfg)
        except CliError as exc:
            raise CliError(f"[{stage}] {exc}") from exc
        except Exception as exc:
            raise CliError(f"[{stage}] {type(exc).__name__}: {exc}") from exc
        _record_meta(cfg, stage, time.monotonic() - t0)
        if stage == "report":
            code = int(rc)
    return code


# ---------------------------------------------------------------------------
# Argument parsing


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", help="HNL design file")
    p.add_argument("--scenarios", help="directory of scenario JSON files")
    p.add_argument("--specs", help="directory of spec JSON files")
    p.add_argument("--out", help="output directory for artifacts")
    p.add_argument("--top", help="top module (default: the unique uninstantiated one)")
    p.add_argument("--tau", type=int, help="activity threshold override for every scenario")
    p.add_argument("--solver", help=f"solver command (default bundled cdcl; ${SOLVER_ENV} overrides)")
    p.add_argument("--jobs", type=int, default=1, help="parallel proof workers")
    p.add_argument("--budget", type=float, default=600.0, help="seconds per proof obligation")
    p.add_argument("--verify-budget", type=float, default=60.0, help="seconds per hint check")


def _config_from(args: argparse.Namespace) -> PipelineConfig:
    missing = [
        flag
        for flag, val in (
            ("--design", args.design),
            ("--scenarios", args.scenarios),
            ("--specs", args.specs),
            ("--out", args.out),
        )
        if not val
    ]
    if missing:
        raise CliError("missing required arguments: " + ", ".join(missing))
    cfg = PipelineConfig(
        design=args.design,
        scenario_dir=args.scenarios,
        spec_dir=args.specs,
        out_dir=args.out,
        top=args.top,
        tau=args.tau,
        solver=args.solver or os.environ.get(SOLVER_ENV) or None,
        budget_s=args.budget,
        verify_budget_s=args.verify_budget,
        jobs=args.jobs,
    )
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hive",
        description="scenario-guided hardware/firmware equivalence pipeline",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="full pipeline, all stages in order")
    _add_config_args(run_p)

    for stage in STAGES:
        sp = sub.add_parser(stage, help=f"{stage} stage only")
        _add_config_args(sp)
        if stage == "rank":
            sp.add_argument("--vcd", help="rank one VCD file instead of a run directory")
            sp.add_argument("--json-out", help="with --vcd: write the report here (default stdout)")

    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rank" and getattr(args, "vcd", None):
            if not os.path.isfile(args.vcd):
                raise CliError(f"VCD file not found: {args.vcd}")
            tau = args.tau if args.tau is not None else 5
            if tau < 2:
                raise CliError("tau must be at least 2 for bucketing")
            doc = _rank_doc(ranking_from_vcd(args.vcd), tau)
            text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
            if args.json_out:
                _write_text(args.json_out, text)
            else:
                sys.stdout.write(text)
            return 0
        if args.command == "run":
            return run_pipeline(_config_from(args))
        cfg = _config_from(args)
        t0 = time.monotonic()
        try:
            rc = _STAGE_FUNCS[args.command](cfg)
        except CliError:
            raise
        except Exception as exc:
            raise CliError(f"[{args.command}] {exc}") from exc
        _record_meta(cfg, args.command, time.monotonic() - t0)
        return int(rc) if args.command == "report" else 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
