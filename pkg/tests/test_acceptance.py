"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal summary.
"""

import itertools
import json
import time

import numpy as np
from conftest import (
    DRIVEN_BOSON_CUTOFF,
    DRIVEN_BOSON_EXACT,
    QUADRATIC_FERMION_EXACT,
    REPULSIVE_FERMION_EXACT,
    boson_corpus,
    corrupted_instances,
    driven_boson_model,
    low_density_matrix,
    quadratic_fermion_model,
    record_criterion,
    repulsive_fermion_model,
    thermal_params,
)
from test_wick import BOSON_CUTOFF, all_monomials, boson_family, pure_fermion_states

from qflab.bhf import (
    QuasifreeParams,
    SolverOptions,
    convex_decompose,
    decompose_quasifree,
    realize_state,
    verify_pure_equals_mixed,
)
from qflab.bogoliubov import implement_unitary, inverse, random_bogoliubov, second_quantize, weyl_operator
from qflab.cli import main
from qflab.fock import annihilator, build_space, creator, safe_projector
from qflab.gaussian import check_purity, conjugate_gen1pdm, gaussian_from_density_matrix, gen1pdm
from qflab.jsonio import density_matrix_to_json, dumps, model_to_json, params_to_json
from qflab.representability import (
    assemble_gen2pdm,
    check_G,
    check_gen2pdm_psd,
    check_P,
    check_Q,
    exchange_operator,
    polynomial_positivity_harness,
    two_pdm_from_state,
)
from qflab.wick import fermion_quasifree_expectation, boson_quasifree_expectation, pfaffian


def finish(number, title, ok, detail):
    record_criterion(number, title, ok, detail)
    assert ok, detail


def random_vector(rng, n, scale=1.0):
    return scale * (rng.normal(size=n) + 1j * rng.normal(size=n))


def low_columns(space, level):
    return space.totals() <= level


# --- 1: canonical relations ------------------------------------------------------------


def test_criterion_1_canonical_relations():
    start = time.perf_counter()
    car_exact = True
    for n in (1, 2, 3, 4):
        space = build_space(n, "fermion")
        eye = np.eye(space.dim)
        for i, j in itertools.product(range(1, n + 1), repeat=2):
            a_i, a_j, c_j = annihilator(space, i), annihilator(space, j), creator(space, j)
            car_exact &= np.array_equal(a_i @ c_j + c_j @ a_i, eye * (i == j))
            car_exact &= np.array_equal(a_i @ a_j + a_j @ a_i, 0 * eye)
    ccr = 0.0
    for n, cutoff in ((1, 8), (2, 6), (3, 5)):
        space = build_space(n, "boson", cutoff)
        keep = safe_projector(space)
        for i, j in itertools.product(range(1, n + 1), repeat=2):
            a_i, a_j, c_j = annihilator(space, i), annihilator(space, j), creator(space, j)
            comm = a_i @ c_j - c_j @ a_i - np.eye(space.dim) * (i == j)
            ccr = max(ccr, np.abs(comm[np.ix_(keep, keep)]).max(), np.abs(a_i @ a_j - a_j @ a_i).max())
    space = build_space(2, "boson", 18)
    cols = low_columns(space, 4)
    rng = np.random.default_rng(101)
    weyl = 0.0
    for _ in range(50):
        f, g = random_vector(rng, 2, 0.2), random_vector(rng, 2, 0.2)
        lhs = weyl_operator(f, space) @ weyl_operator(g, space)
        rhs = np.exp(-0.5j * np.vdot(f, g).imag) * weyl_operator(f + g, space)
        weyl = max(weyl, np.abs((lhs - rhs)[:, cols]).max())
    elapsed = time.perf_counter() - start
    ok = car_exact and ccr <= 1e-12 and weyl <= 1e-8 and elapsed <= 10
    detail = f"CAR exact={car_exact}, CCR {ccr:.1e}, Weyl {weyl:.1e}, {elapsed:.1f}s"
    finish(1, "canonical relations", ok, detail)


# --- 2: purity classification ----------------------------------------------------------


def pure_params(rng, stats):
    n = 3 if stats == "fermion" else 2
    scale = 0.8 if stats == "fermion" else 0.04
    U = random_bogoliubov(n, stats, rng, scale)
    if stats == "fermion":
        slater = tuple(k for k in range(n) if rng.random() < 0.5)
        return QuasifreeParams(stats, U, np.zeros(n), np.zeros(n), slater)
    return QuasifreeParams(stats, U, random_vector(rng, n, 0.06), np.zeros(n))


def mixed_params(rng, stats):
    n = 3 if stats == "fermion" else 2
    if stats == "fermion":
        U = random_bogoliubov(n, stats, rng, 0.8)
        return QuasifreeParams(stats, U, np.zeros(n), rng.uniform(0.1, 1.0, n))
    U = random_bogoliubov(n, stats, rng, 0.04)
    return QuasifreeParams(stats, U, random_vector(rng, n, 0.06), rng.uniform(0.03, 0.12, n))


def test_criterion_2_purity_classification():
    rng = np.random.default_rng(202)
    spaces = {"fermion": build_space(3, "fermion"), "boson": build_space(2, "boson", 18)}
    wrong, agree = 0, True
    worst_pure, least_mixed = 0.0, np.inf
    for stats, space in spaces.items():
        for make, expected in ((pure_params, True), (mixed_params, False)):
            for _ in range(50):
                g = gaussian_from_density_matrix(realize_state(make(rng, stats), space), space, threshold=1e-10)
                report = check_purity(g)
                wrong += report.pure != expected
                agree &= report.verdicts_agree
                if expected:
                    worst_pure = max(worst_pure, report.residual)
                else:
                    least_mixed = min(least_mixed, report.residual)
    ok = wrong == 0 and agree and worst_pure <= 1e-7 and least_mixed >= 1e-3
    detail = (
        f"{wrong} misclassified of 200, pure residual {worst_pure:.1e}, "
        f"mixed residual {least_mixed:.1e}, boson verdicts agree={agree}"
    )
    finish(2, "purity classification", ok, detail)


# --- 3: transformation law -------------------------------------------------------------


def test_criterion_3_transformation_law():
    rng = np.random.default_rng(303)
    cases = {
        "fermion": (build_space(2, "fermion"), 0.8, 2),
        "boson": (build_space(2, "boson", 20), 0.06, 3),
    }
    worst = {}
    for stats, (space, scale, level) in cases.items():
        worst[stats] = 0.0
        for _ in range(30):
            rho = low_density_matrix(space, rng, level)
            U = random_bogoliubov(2, stats, rng, scale)
            # UU* implements the inverse map
            uu_star = implement_unitary(inverse(U), space)
            moved = uu_star @ rho @ uu_star.conj().T
            lhs = gen1pdm(gaussian_from_density_matrix(moved, space, threshold=1e-10))
            rhs = conjugate_gen1pdm(gen1pdm(gaussian_from_density_matrix(rho, space)), U)
            worst[stats] = max(worst[stats], np.abs(lhs - rhs).max())
    ok = max(worst.values()) <= 1e-7
    detail = f"fermion {worst['fermion']:.1e}, boson {worst['boson']:.1e} over 30 pairs each"
    finish(3, "transformation law", ok, detail)


# --- 4: Wick engines -------------------------------------------------------------------


def exact_moment(rho, space, mono, keep=None):
    ann, cre = space.annihilators(), space.creators()
    op = np.eye(space.dim, dtype=complex)
    for f in reversed(mono):
        op = (cre if f.creator else ann)[f.mode - 1] @ op
    if keep is not None:
        rho, op = rho[np.ix_(keep, keep)], op[np.ix_(keep, keep)]
    return np.einsum("ij,ji->", rho, op)


def test_criterion_4_wick_engines():
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    fermion = 0.0
    count = 0
    for space, rho in pure_fermion_states(rng):
        g = gaussian_from_density_matrix(rho, space)
        for mono in all_monomials(3, 6, "c"):
            fermion = max(fermion, abs(fermion_quasifree_expectation(g, mono) - exact_moment(rho, space, mono)))
            count += 1
    pf = 0.0
    for _ in range(100):
        size = 2 * rng.integers(1, 5)
        x = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        m = x - x.T
        det = np.linalg.det(m)
        pf = max(pf, abs(pfaffian(m) ** 2 - det) / max(1.0, abs(det)))
    space, states = boson_family()
    keep = space.totals() <= BOSON_CUTOFF - 4
    boson = 0.0
    for rho in states.values():
        g = gaussian_from_density_matrix(rho, space)
        for mono in all_monomials(2, 4, "a"):
            boson = max(boson, abs(boson_quasifree_expectation(g, mono) - exact_moment(rho, space, mono, keep)))
    elapsed = time.perf_counter() - start
    ok = fermion <= 1e-9 and pf <= 1e-8 and boson <= 1e-7 and elapsed <= 60
    detail = (
        f"fermion {fermion:.1e} over {count} monomials, Pf^2-det {pf:.1e}, "
        f"boson {boson:.1e} over {len(states)} states, {elapsed:.1f}s"
    )
    finish(4, "Wick engines", ok, detail)


# --- 5: representability conditions ----------------------------------------------------


def test_criterion_5_representability():
    corpus = boson_corpus(np.random.default_rng(5))
    failures = []
    for index, (label, space, rho) in enumerate(corpus):
        g = gaussian_from_density_matrix(rho, space, threshold=1e-10)
        Gamma = two_pdm_from_state(rho, space)
        G = assemble_gen2pdm(rho, space)
        report = polynomial_positivity_harness(
            rho, space, samples=100, rng=np.random.default_rng(index), gen2pdm=G, particle_conserving=True
        )
        passed = (
            check_P(Gamma).ok
            and check_G(g.gamma, Gamma).ok
            and check_Q(g.gamma, Gamma).ok
            and np.abs(exchange_operator(2) @ Gamma - Gamma).max() <= 1e-10
            and check_gen2pdm_psd(G).ok
            and np.abs(G.gen1pdm() - gen1pdm(g)).max() <= 1e-12
            and report.all_nonnegative
            and report.verdicts_agree
        )
        if not passed:
            failures.append(label)
    witnessed = 0
    for _, run in corrupted_instances(corpus):
        rep = run()
        witnessed += (not rep.ok) and rep.witness is not None and np.linalg.norm(rep.witness) > 0
    ok = not failures and len(corpus) >= 20 and witnessed >= 5
    detail = f"{len(corpus) - len(failures)}/{len(corpus)} states pass, {witnessed} corrupted inputs with witness"
    if failures:
        detail += f", failing: {', '.join(failures)}"
    finish(5, "representability conditions", ok, detail)


# --- 6: pure versus mixed minimization ---------------------------------------------------


def test_criterion_6_pure_equals_mixed():
    start = time.perf_counter()
    models = [
        ("quadratic fermion", quadratic_fermion_model(), build_space(3, "fermion"), QUADRATIC_FERMION_EXACT),
        ("repulsive fermion", repulsive_fermion_model(), build_space(3, "fermion"), REPULSIVE_FERMION_EXACT),
        ("driven boson", driven_boson_model(), build_space(1, "boson", DRIVEN_BOSON_CUTOFF), DRIVEN_BOSON_EXACT),
    ]
    ok = True
    parts = []
    for name, H, space, exact in models:
        report = verify_pure_equals_mixed(H, space, opts=SolverOptions())
        good = report.exact_ok and report.gap <= 1e-4 and abs(report.e_exact - exact) <= 1e-9
        if name == "quadratic fermion":
            good &= abs(report.e_pure - exact) <= 1e-6
        ok &= good
        parts.append(f"{name} E={report.e_pure:.7f} gap {report.gap:.1e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 300
    finish(6, "pure equals mixed minimum", ok, f"{'; '.join(parts)}; {elapsed:.0f}s")


# --- 7: decompositions -----------------------------------------------------------------


def test_criterion_7_decompositions():
    rng = np.random.default_rng(707)
    round_trip = 0.0
    for stats, space, scale in (("fermion", build_space(2, "fermion"), 0.8), ("boson", build_space(2, "boson", 20), 0.07)):
        for _ in range(10):
            p = mixed_params(rng, stats) if stats == "boson" else QuasifreeParams(
                stats, random_bogoliubov(2, stats, rng, scale), np.zeros(2), rng.uniform(0, 2, 2)
            )
            g = gaussian_from_density_matrix(realize_state(p, space), space)
            back = gaussian_from_density_matrix(realize_state(decompose_quasifree(g), space), space)
            round_trip = max(round_trip, np.abs(gen1pdm(back) - gen1pdm(g)).max(), np.abs(back.b - g.b).max())
    space = build_space(2, "fermion")
    p = QuasifreeParams("fermion", random_bogoliubov(2, "fermion", rng, 0.8), np.zeros(2), [0.3, 1.7])
    rho = realize_state(p, space)
    approx = sum(w * realize_state(q, space) for w, q in convex_decompose(p))
    convex = np.abs(np.linalg.eigvalsh(rho - approx)).sum()
    trace = 0.0
    for b in ((0.5, 2.0), (0.0, 3.0, 0.25)):
        fspace = build_space(len(b), "fermion")
        trace = max(trace, abs(np.trace(second_quantize(np.diag(b), fspace)).real - np.prod(1 + np.array(b))))
    ok = round_trip <= 1e-7 and convex <= 1e-10 and trace <= 1e-12
    detail = f"round trip {round_trip:.1e}, convex {convex:.1e}, trace {trace:.1e}"
    finish(7, "decompositions", ok, detail)


# --- 8: reproducible command line runs -------------------------------------------------


def test_criterion_8_replay(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    fspace = tmp_path / "fspace.json"
    fspace.write_text(dumps({"n_modes": 2, "statistics": "fermion"}))
    bspace = tmp_path / "bspace.json"
    bspace.write_text(dumps({"n_modes": 1, "statistics": "boson", "cutoff": 24}))
    space = build_space(2, "fermion")
    slater = tmp_path / "slater.json"
    slater.write_text(dumps(density_matrix_to_json(realize_state(thermal_params(2, "fermion", [0.0, 0.0]), space))))
    thermal = tmp_path / "thermal.json"
    thermal.write_text(dumps({"kind": "quasifree", "params": params_to_json(thermal_params(1, "boson", [0.2]))}))
    model = tmp_path / "model.json"
    model.write_text(dumps(model_to_json(quadratic_fermion_model())))
    runs = {
        "purity": ["purity", "--state", thermal, "--space", bspace],
        "repr": ["repr", "--state", thermal, "--space", bspace, "--seed", 3],
        "wick": ["wick", "c*(1) c(1) + c*(2) c(2)", "--state", slater, "--space", fspace],
        "bhf": ["bhf", "--model", model, "--restarts", 3, "--samples", 20],
    }
    same = {}
    for name, argv in runs.items():
        report = tmp_path / f"{name}.json"
        first = main([str(a) for a in argv] + ["--report", str(report)])
        replayed = tmp_path / f"{name}-replayed.json"
        code = main(["replay", str(tmp_path / f"{name}.manifest.json"), "--report", str(replayed)])
        # replay reproduces the original exit code, which is 1 for the impure thermal state
        same[name] = code == first and json.loads(replayed.read_text()) == json.loads(report.read_text())
    capsys.readouterr()
    ok = all(same.values())
    detail = ", ".join(f"{k} {'identical' if v else 'differs'}" for k, v in same.items())
    finish(8, "replayable command line runs", ok, detail)
