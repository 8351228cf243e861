"""Runs experiments and turns results into report rows and files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analytic import mean_erasure, predict_slice, rlnc_missing_dof_pmf
from .config import Experiment
from .errors import ConfigurationError
from .planner import (
    Requirement,
    capacity,
    min_links,
    plan_partition,
)
from .sim_core import aggregate, run_trials

REPORT_HEADER = ("slicing_choice", "slice_id", "protocol", "E_D", "E_I", "E_G", "T_nu",
                 "ci_D", "ci_I", "ci_G", "analytic_E_D", "analytic_E_G", "flags")
PMF_HEADER = ("slicing_choice", "slice_id", "generation_size", "fec_rate", "fb_rate",
              "lambda", "threshold", "p_m0", "p_m1", "p_m2", "p_m3", "p_m4", "p_m5")


@dataclass
class ReportRow:
    slicing_choice: Optional[int]
    slice_id: int
    protocol: str
    E_D: Optional[float] = None
    E_I: Optional[float] = None
    E_G: Optional[float] = None
    T_nu: Optional[float] = None
    ci_D: Optional[float] = None
    ci_I: Optional[float] = None
    ci_G: Optional[float] = None
    analytic_E_D: Optional[float] = None
    analytic_E_G: Optional[float] = None
    flags: list = field(default_factory=list)

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["flags"] = ";".join(self.flags)
        return rec


def requirement_flags(req: Optional[Requirement], delay, inorder, goodput) -> list:
    """``name:ok|fail`` per present constraint; in-order bounds need simulated values."""
    if req is None:
        return []
    flags = []
    if req.min_goodput is not None and goodput is not None:
        flags.append(f"goodput:{'ok' if goodput >= req.min_goodput else 'fail'}")
    if req.max_delay is not None and delay is not None:
        flags.append(f"delay:{'ok' if delay <= req.max_delay else 'fail'}")
    if req.max_inorder_delay is not None:
        if inorder is None:
            flags.append("inorder:needs-simulation")
        else:
            flags.append(f"inorder:{'ok' if inorder <= req.max_inorder_delay else 'fail'}")
    return flags


def analyze(exp: Experiment) -> tuple:
    """Closed-form rows and missing-DoF summaries for every slicing choice."""
    rows, pmfs = [], []
    for choice in exp.choices:
        for j, spec in enumerate(exp.slices_for(choice)):
            pred = predict_slice(spec, exp.network)
            req = exp.apps[j].requirement
            rows.append(ReportRow(choice, j, spec.protocol.variant.value,
                                  analytic_E_D=pred.delay, analytic_E_G=pred.goodput,
                                  flags=requirement_flags(req, pred.delay, None, pred.goodput)))
            if spec.protocol.is_rlnc:
                proto = spec.resolved_protocol(exp.network)
                pmf = rlnc_missing_dof_pmf(proto, mean_erasure(spec, exp.network))
                head = list(pmf.probs[:6]) + [0.0] * max(0, 6 - len(pmf.probs))
                pmfs.append(dict(zip(PMF_HEADER, [choice, j, proto.generation_size,
                                                  proto.fec_rate, proto.fb_rate, pmf.lam,
                                                  pmf.threshold, *head])))
    return rows, pmfs


def simulate(exp: Experiment, workers: int = 1) -> list:
    """Simulated rows (with CI half-widths) for every slicing choice and slice."""
    rows = []
    for choice in exp.choices:
        scenario = exp.scenario(choice)
        for j, spec in enumerate(scenario.slices):
            summary = aggregate(run_trials(scenario, j, workers))
            d, i, g = (summary[k] for k in ("mean_delay", "mean_inorder_delay", "goodput"))
            row = ReportRow(choice, j, spec.protocol.variant.value,
                            E_D=d.mean, E_I=i.mean, E_G=g.mean,
                            T_nu=summary.mean("completion_slots"),
                            ci_D=d.half_width, ci_I=i.half_width, ci_G=g.half_width)
            if exp.analytic_overlay:
                pred = predict_slice(spec, exp.network)
                row.analytic_E_D, row.analytic_E_G = pred.delay, pred.goodput
            row.flags = requirement_flags(exp.apps[j].requirement, d.mean, i.mean, g.mean)
            rows.append(row)
    return rows


def plan(exp: Experiment) -> dict:
    """Per-application minimum allocations and the feasible partitions."""
    net = exp.network
    reqs = exp.requirements()
    if any(r is None for r in reqs):
        missing = [a.name for a in exp.apps if a.requirement is None]
        raise ConfigurationError(f"plan needs a requirement on every slice (missing: {missing})")
    pbar = math.fsum(net.link_erasure_probs) / net.n_links
    allocations = []
    for app, req in zip(exp.apps, reqs):
        res = min_links(req, pbar, net.rtt)
        rec = {
            "app": app.name,
            "protocol": req.protocol.variant.value,
            "feasible": res.feasible,
            "links_needed": res.links_needed,
            "binding_constraint": res.binding_constraint.value,
            "predicted_E_D": res.predicted.delay if res.predicted else None,
            "predicted_E_G": res.predicted.goodput if res.predicted else None,
            "needs_simulation": res.needs_simulation,
            "capacity": capacity(net, req) if net.is_homogeneous() else None,
            "note": res.note,
        }
        allocations.append(rec)
    partitions = []
    for rank, (sp, results) in enumerate(plan_partition(net, reqs, exp.strategy)):
        for j, (spec, res) in enumerate(zip(sp.slices, results)):
            flags = requirement_flags(reqs[j], res.predicted.delay, None, res.predicted.goodput)
            partitions.append({
                "rank": rank,
                "slicing_choice": sp.choice,
                "sizes": "+".join(str(s) for s in sp.sizes()),
                "slice_id": j,
                "app": exp.apps[j].name,
                "protocol": spec.protocol.variant.value,
                "links": spec.size,
                "analytic_E_D": res.predicted.delay,
                "analytic_E_G": res.predicted.goodput,
                "flags": ";".join(flags),
            })
    return {"allocations": allocations, "partitions": partitions,
            "feasible": bool(partitions)}


# ---------------------------------------------------------------------------
# Writers


def _plain(value):
    """numpy scalars to Python ones, so repr and JSON stay clean."""
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path, header, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rec in records:
            w.writerow([_fmt(rec.get(h)) for h in header])
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_plain) + "\n")
    return path


def write_rows(rows, out_dir, stem: str, fmt: str = "csv") -> Path:
    records = [r.as_record() for r in rows]
    if fmt == "json":
        return write_json(Path(out_dir) / f"{stem}.json", records)
    return write_csv(Path(out_dir) / f"{stem}.csv", REPORT_HEADER, records)
