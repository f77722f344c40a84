"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are collected in ``conftest.ACCEPTANCE_LINES`` and printed in the
terminal summary. Every test computes all of its measurements before
asserting, so a failing line still carries the numbers.
"""
import csv
import json
import time

import numpy as np

from conftest import ACCEPTANCE_LINES, ROOT
from sqntr.cli import RunSpec, main, random_spd
from sqntr.compact import (
    BFGS,
    SR1,
    build_bfgs,
    build_sr1,
    select_gamma_bfgs,
    select_gamma_sr1,
)
from sqntr.curvature import CurvaturePairBuffer, accept_bfgs_pair, accept_sr1_pair
from sqntr.objective import CorruptedGradient, MlpObjective, QuadraticObjective, Rosenbrock, fd_check
from sqntr.sampling import aggregate_duplex, aggregate_triple, ChunkEval, CURRENT, plan_epoch
from sqntr.testing import dense_bfgs_recursion, dense_sr1_recursion, fuzz_subproblem
from sqntr.trainers import CSV_COLUMNS, TrainConfig, train

CONFIGS = ROOT / "configs"


def report(num, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title}: {detail}"
    ACCEPTANCE_LINES[num] = line
    print(line)
    assert ok, line


# 1, 2: subproblem solvers against the dense oracle

def test_criterion_1_subproblem_oracle():
    t0 = time.perf_counter()
    reports = [fuzz_subproblem(1000, 101, BFGS), fuzz_subproblem(1000, 202, SR1)]
    elapsed = time.perf_counter() - t0
    ok = all(r.ok for r in reports) and elapsed < 60.0
    detail = "; ".join(r.summary() for r in reports) + f"; {elapsed:.1f}s"
    for r in reports:
        for i, msg in r.failures[:3]:
            print(f"  {r.kind} instance {i}: {msg}")
    report(1, "subproblem oracle equivalence", ok, detail)


def test_criterion_2_hard_case():
    r = fuzz_subproblem(200, 303, SR1, hard_case=True)
    for i, msg in r.failures[:3]:
        print(f"  instance {i}: {msg}")
    report(2, "hard-case suite", r.ok and r.hard_cases == 200, r.summary())


# 3: compact forms against the dense recursions

def _pair_sequence(rng, kind, n, length):
    """Pairs that pass the update test of ``kind`` against the running dense matrix."""
    if kind == BFGS:
        g = rng.standard_normal((n, n))
        h = g @ g.T / n + 0.1 * np.eye(n)
    else:
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        h = (q * rng.uniform(-3, 3, n)) @ q.T
    pairs = []
    bmat = np.eye(n)
    while len(pairs) < length:
        s = rng.standard_normal(n)
        y = h @ s + 0.1 * rng.standard_normal(n)
        if kind == BFGS:
            if not accept_bfgs_pair(s, y):
                continue
        else:
            r = y - bmat @ s
            # keep the dense recursion itself well conditioned
            if not accept_sr1_pair(s, y, bmat @ s) or abs(s @ r) < 1e-2 * np.linalg.norm(s) * np.linalg.norm(r):
                continue
            bmat = dense_sr1_recursion(1.0, [(s, y)], n) - np.eye(n) + bmat
        pairs.append((s, y))
    return pairs


def test_criterion_3_compact_equivalence():
    rng = np.random.default_rng(404)
    worst_op = worst_secant = 0.0
    count = 0
    for i in range(500):
        kind = BFGS if i % 2 == 0 else SR1
        n = int(rng.integers(2, 13))
        cap = int(rng.integers(1, min(5, n) + 1))
        buf = CurvaturePairBuffer(cap)
        history = []
        for s, y in _pair_sequence(rng, kind, n, int(rng.integers(1, 2 * cap + 1))):
            buf.push(s, y)
            history.append((s, y))
        kept = history[-cap:]
        if kind == BFGS:
            gamma = select_gamma_bfgs(buf).gamma
            b, ref = build_bfgs(buf, gamma), dense_bfgs_recursion(gamma, kept, n)
        else:
            gamma = select_gamma_sr1(buf).gamma
            b, ref = build_sr1(buf, gamma), dense_sr1_recursion(gamma, kept, n)
        worst_op = max(worst_op, float(np.abs(b.to_dense() - ref).max()))
        s, y = kept[-1]
        worst_secant = max(worst_secant, float(np.abs(b.apply(s) - y).max() / max(1.0, np.abs(y).max())))
        count += 1
    ok = count == 500 and worst_op <= 1e-10 and worst_secant <= 1e-9
    report(3, "compact-form equivalence", ok,
           f"{count} sequences, max |compact - dense| {worst_op:.2e}, max secant residual {worst_secant:.2e}")


# 4: SR1 on exact quadratic pairs

def _smallest_gen_eig_numpy(a, b):
    c = np.linalg.cholesky(b)
    ci = np.linalg.inv(c)
    return float(np.linalg.eigh(ci @ a @ ci.T)[0][0])


def test_criterion_4_quadratic_exactness():
    rng = np.random.default_rng(505)
    worst_span = 0.0
    worst_bound = -np.inf
    gammas = 0
    for _ in range(200):
        n = int(rng.integers(3, 13))
        m = int(rng.integers(1, min(5, n - 1) + 1))
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        h = (q * rng.uniform(-5, 5, n)) @ q.T
        h = 0.5 * (h + h.T)
        s = rng.standard_normal((n, m))
        buf = CurvaturePairBuffer(m)
        for j in range(m):
            buf.push(s[:, j], h @ s[:, j])
        lam_hat = _smallest_gen_eig_numpy(s.T @ h @ s, s.T @ s)
        b = build_sr1(buf, select_gamma_sr1(buf).gamma)
        for coef in rng.standard_normal((3, m)):
            v = s @ coef
            hv = h @ v
            worst_span = max(worst_span, float(np.abs(b.apply(v) - hv).max() / max(1.0, np.abs(hv).max())))
        for gap in (1e-3, 0.5, 2.0, 10.0):
            gamma = lam_hat - gap
            if abs(gamma) < 1e-8:
                continue
            lam_min = float(np.linalg.eigh(build_sr1(buf, gamma).to_dense())[0][0])
            worst_bound = max(worst_bound, lam_min - lam_hat)
            gammas += 1
    ok = worst_span <= 1e-9 and worst_bound <= 1e-9
    report(4, "quadratic exactness", ok,
           f"max span residual {worst_span:.2e}; max lambda_min(B) - lambda_hat {worst_bound:.2e} over {gammas} gammas")


# 5: deterministic convergence

def test_criterion_5_deterministic_convergence():
    t0 = time.perf_counter()
    h, g = random_spd(20, 1e3, 0)
    quad = QuadraticObjective(h, g)
    rq = train(TrainConfig(method="lbfgs-tr", max_iter=100), quad)
    gnorm = float(np.linalg.norm(quad.eval_batch(rq.w)[1]))
    quad_ok = gnorm <= 1e-5
    rr = train(TrainConfig(method="lsr1-tr", max_iter=500, grad_tol=1e-8), Rosenbrock(), w0=[-1.2, 1.0])
    f_rb = Rosenbrock().loss(rr.w)
    rosen_ok = f_rb < 1e-8
    elapsed = time.perf_counter() - t0
    ok = quad_ok and rosen_ok and elapsed < 10.0
    detail = (f"quadratic n=20 cond=1e3: ||g||={gnorm:.2e} after {len(rq.records)} iterations "
              f"({'ok' if quad_ok else 'not reached'}); "
              f"Rosenbrock: f={f_rb:.2e} after {len(rr.records)} iterations ({'ok' if rosen_ok else 'not reached'}); "
              f"{elapsed:.1f}s")
    report(5, "deterministic convergence", ok, detail)


# 6: sampling

def test_criterion_6_sampling_invariants():
    rng = np.random.default_rng(606)
    x = rng.standard_normal((400, 5))
    obj = MlpObjective(x, rng.integers(0, 3, 400), (5, 4, 3))
    w = rng.standard_normal(obj.param_dim)
    bad = []
    worst = 0.0
    triples = 0
    for trial in range(100):
        os_ = int(rng.integers(1, 60))
        n = int(rng.integers(2 * os_, 401))
        plan = plan_epoch(n, os_, rng)
        if plan.n_batches != n // os_ - 1:
            bad.append((trial, "batch count"))
        allidx = np.concatenate(list(plan.chunks) + [plan.remainder])
        if not np.array_equal(np.sort(allidx), np.arange(n)):
            bad.append((trial, "coverage/disjointness"))
        for j in range(plan.n_batches - 1):
            if not np.array_equal(np.intersect1d(plan.batch(j), plan.batch(j + 1)), np.sort(plan.chunks[j + 1])):
                bad.append((trial, f"overlap {j}"))
        for j in range(plan.n_batches):
            ev = {c: ChunkEval(c, *obj.eval_batch(w, plan.chunks[c]), CURRENT) for c in (j, j + 1)}
            if plan.is_triple(j):
                rem = ChunkEval("R", *obj.eval_batch(w, plan.remainder), CURRENT)
                f, gr = aggregate_triple(ev[j], rem, ev[j + 1], os_, plan.remainder.size)
                triples += 1
            else:
                f, gr = aggregate_duplex(ev[j], ev[j + 1])
            f_ref, g_ref = obj.eval_batch(w, plan.batch(j))
            worst = max(worst, abs(f - f_ref), float(np.abs(gr - g_ref).max()))
    ok = not bad and worst <= 1e-12
    report(6, "sampling invariants", ok,
           f"100 plans, {len(bad)} invariant violations, {triples} triple batches, max aggregation gap {worst:.2e}")


# 7: gradient check

def _mnist_objective(limit=1000):
    spec = RunSpec.load(CONFIGS / "mnist_slsr1.json")
    spec.objective_spec = dict(spec.objective_spec, limit=limit)
    spec.objective_spec.pop("test_images", None)
    spec.objective_spec.pop("test_labels", None)
    return spec.build_objectives()[0]


def test_criterion_7_gradient_check():
    obj = _mnist_objective()
    batch = np.arange(100)   # one training batch (bs = 100)
    errs = [fd_check(obj, obj.init_params(seed), seed=seed, indices=batch) for seed in range(20)]
    w = obj.init_params(0)
    _, g = obj.eval_batch(w, batch)
    j = int(np.argmax(np.abs(g)))
    caught = fd_check(CorruptedGradient(obj, j, 2.0), w, coords=[j], indices=batch)
    ok = max(errs) < 1e-5 and caught > 0.4
    report(7, "gradient correctness", ok,
           f"max fd error over 20 seeds {max(errs):.2e}; corrupted coordinate error {caught:.2f}")


# 8: reduced MNIST training

def _run_config(name, **overrides):
    spec = RunSpec.load(CONFIGS / name)
    cfg = TrainConfig.from_dict(dict(spec.config.to_dict(), **overrides))
    obj, test_obj = spec.build_objectives()
    t0 = time.perf_counter()
    res = train(cfg, obj, test_obj=test_obj)
    return res, time.perf_counter() - t0


def test_criterion_8_mnist_proxy():
    results = {}
    for name, label in (("mnist_slbfgs.json", "sL-BFGS-TR"), ("mnist_slsr1.json", "sL-SR1-TR"), ("mnist_adam.json", "Adam")):
        res, secs = _run_config(name)
        last = res.records[-1]
        results[label] = (last.train_acc, last.test_acc, secs)
    order = sorted(results, key=lambda k: -results[k][0])
    ok = (results["sL-BFGS-TR"][0] >= 90 and results["sL-SR1-TR"][0] >= 90 and results["Adam"][0] >= 85
          and all(v[2] < 300 for v in results.values()))
    detail = "; ".join(f"{k} train {v[0]:.1f}% test {v[1]:.1f}% in {v[2]:.0f}s" for k, v in results.items())
    report(8, "reduced-MNIST training proxy", ok, detail + "; ordering by train accuracy: " + " > ".join(order))


# 9: reproducibility

def _metrics_without_time(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    drop = CSV_COLUMNS.index("wall_time_s")
    return [r[:drop] + r[drop + 1:] for r in rows]


def test_criterion_9_reproducibility(tmp_path, monkeypatch):
    identical = []
    rows = 0
    for name in ("mnist_slbfgs.json", "mnist_slsr1.json", "mnist_adam.json"):
        cfg = json.loads((CONFIGS / name).read_text())
        cfg["epoch_max"] = 2
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            cfg["objective"][key] = str((CONFIGS / cfg["objective"][key]).resolve())
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{path.stem}_{run}"
            monkeypatch.setenv("SQNTR_OUTPUT_DIR", str(out))
            assert main(["train", "--config", str(path)]) == 0
            outs.append(_metrics_without_time(out / "metrics.csv"))
        identical.append(outs[0] == outs[1])
        rows += len(outs[0]) - 1
    ok = all(identical)
    report(9, "reproducibility", ok, f"{sum(identical)}/3 configs bitwise identical across two runs ({rows} rows each)")
