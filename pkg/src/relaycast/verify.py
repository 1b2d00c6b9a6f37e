"""Quick built-in oracle checks behind ``relaycast verify``.

Each check is a reduced-size version of one of the package's test oracles
and finishes in seconds; the full suites live in the test directory.
"""

import csv
import os
import time
from dataclasses import replace

import numpy as np

from . import cccp, harness, linksim, model, scenario
from .conic import Status, solve
from .conic.cases import infeasible_instance, optimal_instance

__all__ = ["CHECKS", "run_all"]


def _instance(cfg, seed):
    channels = scenario.generate(cfg.network(), seed)
    return channels, model.build(channels), cfg.budget()


def _random_solution(data, budget, seed):
    ndata, nbudget, norm = model.normalize(data, budget)
    st = cccp.initial_point(ndata, nbudget, seed)
    return norm.solution_to_physical(model.BeamformerSolution(st.w, st.a, st.t))


def check_link_snr(cfg, seed):
    """Closed-form SNR against simulated SNR (0.1 dB, 2e5 pairs)."""
    channels, data, budget = _instance(cfg, seed)
    sol = _random_solution(data, budget, seed)
    stats = linksim.measure(sol, channels, linksim.TransmissionBatch(n_pairs=200_000, seed=seed),
                            covariances=False)
    gap = np.max(np.abs(stats.snr_db - 10 * np.log10(model.snr_all(sol.w, sol.a, data))[:, None]))
    return gap <= 0.1, f"max |gap| {gap:.4f} dB"


def check_ml_reduction(cfg, seed):
    """Symbol-by-symbol decisions equal exhaustive joint ML (2000 pairs)."""
    channels, data, budget = _instance(cfg, seed)
    sol = _random_solution(data, budget, seed)
    batch = linksim.TransmissionBatch(n_pairs=2000, seed=seed)
    sig = linksim.transmit(sol, channels, batch)
    bad = 0
    for m in range(channels.destination_count):
        _, dec = linksim.detect(sig.y[m], sol, channels, m, batch)
        bad += int(np.sum(dec != linksim.joint_ml(sig.y[m], sol, channels, m, batch)))
    return bad == 0, f"{bad} mismatches"


def check_cccp(cfg, seed):
    """CCCP objective is monotone and every iterate is feasible."""
    channels, data, budget = _instance(cfg, seed)
    rep = cccp.run(data, budget, cccp.CccpOptions(seed=seed, epsilon=1e-4, max_iter=15))
    t = np.array([e.t for e in rep.trace])
    rises = int(np.sum(np.diff(t) > 1e-9 * t[:-1]))
    viol = model.feasible(rep.solution.w, rep.solution.a, budget, data, rtol=1e-9)
    return rises == 0 and not viol, f"{len(t) - 1} iterations, {rises} rises, {len(viol)} violations"


def check_ordering(cfg, seed):
    """SDR2D-UB >= R2-CCCP >= R1-CCCP on one instance."""
    small = replace(cfg, methods=("R2-CCCP", "R1-CCCP", "SDR2D-UB"), sweep_axis="P_T",
                    sweep_values=(cfg.P_T_dbm,), options=replace(cfg.options, grid_size=40))
    recs, _ = harness.run_cell(small, seed, cfg.P_T_dbm)
    v = {r.method: r.min_snr for r in recs}
    ok = v["SDR2D-UB"] >= v["R2-CCCP"] * (1 - 1e-6) and v["R2-CCCP"] >= v["R1-CCCP"] * (1 - 1e-6)
    txt = ", ".join(f"{k} {10 * np.log10(x):.3f} dB" for k, x in v.items())
    return ok, txt


def check_conic(cfg, seed):
    """Known-optimum and infeasible random conic programs (5 of each kind)."""
    rng = np.random.default_rng(seed)
    errs, certified, total = [], 0, 0
    for kind in ("lp", "socp", "sdp"):
        for _ in range(5):
            prog, opt = optimal_instance(rng, kind)
            sol = solve(prog)
            errs.append(abs(sol.primal_objective - opt) / max(1.0, abs(opt)) if sol.optimal
                        else np.inf)
            total += 1
            certified += solve(infeasible_instance(rng, kind)).status == Status.PRIMAL_INFEASIBLE
    worst = max(errs)
    return worst <= 1e-6 and certified >= total - 1, \
        f"worst rel. error {worst:.2e}, {certified}/{total} infeasible certified"


CHECKS = {
    "link-snr": check_link_snr,
    "ml-reduction": check_ml_reduction,
    "cccp-monotone": check_cccp,
    "bound-ordering": check_ordering,
    "conic-regression": check_conic,
}


def run_all(cfg, out=None):
    """Run every check on the first seed of ``cfg``; print one line each."""
    seed = cfg.seeds[0]
    rows, ok_all = [], True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn(cfg, seed)
        except Exception as exc:  # noqa: BLE001  reported as a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({dt:.1f} s)")
        rows.append({"check": name, "passed": bool(ok), "detail": detail})
    if out:
        harness.prepare_output_dir(out)
        with open(os.path.join(out, "verify.csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["check", "passed", "detail"], lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        harness.write_manifest(cfg, os.path.join(out, "manifest.json"), "verify", ["verify.csv"])
    return ok_all
