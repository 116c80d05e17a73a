"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are also
collected into an "acceptance criteria" section of the terminal summary.
"""

import json

import numpy as np
import pytest
from scipy.stats import multivariate_normal, ortho_group

from pour._rng import derive_seed, make_rng
from pour.bounds import random_mixture_pair, verify_decomposition_bound
from pour.cli import main
from pour.geometry import gram_residual, make_etf, project_frame, projection_norms, projector_from_direction
from pour.metrics import aus, linear_cka, rmia_linear_probe, rus, weight_angle_stats
from pour.synthetic import NcGenConfig, sample_nc_features, split_forget_retain
from pour.toy_model import (
    TrainConfig,
    encoder_features,
    forward_features,
    forward_logits,
    init_model,
    ncm_classify,
    predict,
    softmax,
    train_supervised,
)
from pour.unlearn import UnlearnConfig, pour_d, pour_p, uniformity_check

from conftest import identity_model, record_criterion

TRAIN = TrainConfig(steps=2000, step_size=0.1, optimizer="momentum", weight_decay=5e-4)


def test_c01_etf_closure():
    worst_res, worst_norm, cases = 0.0, 0.0, 0
    for c in range(3, 21):
        target = c * (c - 2) / (c - 1) ** 2
        for d in (c - 1, 4 * c):
            for seed in range(3):
                frame = make_etf(c, d, seed)
                for u in range(c):
                    worst_res = max(worst_res, gram_residual(project_frame(frame, u)))
                    worst_norm = max(worst_norm, float(np.max(np.abs(projection_norms(frame, u) ** 2 - target))))
                    cases += 1
    ok = worst_res < 1e-9 and worst_norm < 1e-10
    assert record_criterion(1, "ETF closure", ok,
                            f"{cases} cases, max residual {worst_res:.2e} (<1e-9), "
                            f"max |norm^2 - C(C-2)/(C-1)^2| {worst_norm:.2e} (<1e-10)")


def test_c02_cka_invariances():
    rng = make_rng(derive_seed(0, "acceptance-cka"))
    worst = {"scale": 0.0, "rotation": 0.0, "permutation": 0.0, "anisotropic": 0.0}
    for i in range(100):
        n, p = int(rng.integers(10, 60)), int(rng.integers(2, 12))
        x = rng.standard_normal((n, p))
        r = ortho_group.rvs(p, random_state=int(rng.integers(2**31))) if p > 1 else np.eye(1)
        distort = 1.0 + 0.05 * rng.uniform(-1.0, 1.0, p)
        devs = {
            "scale": linear_cka(x, float(rng.uniform(0.01, 100.0)) * x),
            "rotation": linear_cka(x, x @ r),
            "permutation": linear_cka(x, x[:, rng.permutation(p)]),
            "anisotropic": linear_cka(x, x * distort),
        }
        for k, v in devs.items():
            worst[k] = max(worst[k], abs(v - 1.0))
    ok = max(worst["scale"], worst["rotation"], worst["permutation"]) < 1e-9 and worst["anisotropic"] <= 0.25
    assert record_criterion(2, "CKA invariances", ok,
                            ", ".join(f"{k} max|CKA-1| {v:.2e}" for k, v in worst.items())
                            + " (limits 1e-9 / 0.25)")


@pytest.fixture(scope="module")
def nc_models():
    """Toy models trained to interpolation on C=4, d=8 blobs, one per seed."""
    frame = make_etf(4, 8, 0)
    out = []
    for seed in range(5):
        data = sample_nc_features(NcGenConfig(frame, 0.1, 100, derive_seed(seed, "acc-train")))
        model = train_supervised(init_model(8, 4, 64, seed=derive_seed(seed, "acc-init")), data,
                                 TrainConfig(**{**TRAIN.__dict__, "seed": seed}))
        out.append((model, data))
    return out


def test_c03_pour_d_loss_implies_cka(nc_models):
    frame = make_etf(4, 8, 0)
    qualifying, failures, lines = 0, 0, []
    for seed, (model, _) in enumerate(nc_models):
        for u in (0, 2):
            data = sample_nc_features(NcGenConfig(frame, 0.05, 200, derive_seed(seed, "acc-distill")))
            d_f, _ = split_forget_retain(data, u)
            result = pour_d(model, UnlearnConfig(u, "pour_d"), d_f)
            teacher = result.projector.apply(encoder_features(model, d_f.rows))
            cka = linear_cka(forward_features(result.model, d_f.rows), teacher)
            loss = result.losses[-1]
            if loss < 1e-4:
                qualifying += 1
                failures += cka <= 0.99
            lines.append(f"{loss:.1e}/{cka:.5f}")
    ok = qualifying >= 1 and failures == 0
    assert record_criterion(3, "POUR-D L2 -> CKA", ok,
                            f"{qualifying}/10 runs reached loss<1e-4, {failures} with CKA<=0.99 "
                            f"(loss/CKA: {' '.join(lines)})")


def test_c04_zero_noise_uniformity():
    frame = make_etf(4, 6, 2)
    out, _ = pour_p(identity_model(frame), UnlearnConfig(0))
    d_f, _ = split_forget_retain(sample_nc_features(NcGenConfig(frame, 0.0, 200, 1)), 0)
    z = forward_features(out, d_f.rows)
    q = softmax(np.delete(forward_logits(out, d_f.rows), 0, axis=1))
    alpha = float(np.mean(predict(out, d_f.rows) == 0))
    exact = bool(np.all(z == 0.0)) and bool(np.all(q == 1.0 / 3.0)) and alpha == 0.0
    means = []
    for sigma in (0.01, 0.05, 0.1):
        devs = []
        for seed in range(5):
            noisy, _ = split_forget_retain(sample_nc_features(NcGenConfig(frame, sigma, 200, seed)), 0)
            devs.append(uniformity_check(out, noisy.rows)[1])
        means.append(float(np.mean(devs)))
    ordered = means[0] < means[1] < means[2]
    assert record_criterion(4, "zero-noise forgetting", exact and ordered,
                            f"sigma=0: features all zero, softmax exactly 1/3, alpha={alpha}: {exact}; "
                            f"mean max deviation at sigma 0.01/0.05/0.1 = "
                            f"{means[0]:.2e}/{means[1]:.2e}/{means[2]:.2e}, strictly increasing: {ordered}")


def test_c05_ncm_matches_bayes():
    frame, u, sigma = make_etf(5, 7, 1), 3, 0.35
    proj = projector_from_direction(frame.directions[u])
    retained = [c for c in range(5) if c != u]
    rng = make_rng(derive_seed(0, "acc-ncm"))
    labels = rng.choice(retained, size=10_000)
    x = frame.directions[labels] + sigma * rng.standard_normal((10_000, 7))
    z = proj.apply(x)
    means = proj.apply(frame.directions[retained])
    ncm = np.array(retained)[ncm_classify(means, z)]
    # Bayes oracle in an orthonormal basis of the complement of v_u: N(B^T P v_c, sigma^2 I_{d-1}).
    basis = np.linalg.svd(proj.matrix)[0][:, :6]
    coords = z @ basis
    log_dens = np.column_stack([
        multivariate_normal(means[i] @ basis, sigma**2 * np.eye(6)).logpdf(coords) for i in range(4)
    ])
    bayes = np.array(retained)[np.argmax(log_dens, axis=1)]
    agree = float(np.mean(ncm == bayes))
    acc = float(np.mean(ncm == labels))
    assert record_criterion(5, "NCM = Bayes on projected features", agree == 1.0,
                            f"agreement {agree * 100:.2f}% on 10000 points (NCM accuracy {acc:.3f})")


def test_c06_decomposition_bound():
    rng = make_rng(derive_seed(0, "bound-check"))
    held = ordered = 0
    for t in range(100):
        p, q = random_mixture_pair(rng, 8)
        triple = verify_decomposition_bound(p, q, 200, "gaussian", derive_seed(0, "trial", t), 10)
        held += triple.sandwiched(3.0)
        ordered += triple.lower <= triple.upper
    ok = held >= 99 and ordered == 100
    assert record_criterion(6, "decomposition bound", ok,
                            f"sandwich within 3 sigma in {held}/100 (>=99), lower<=upper in {ordered}/100")


def test_c07_score_formulas():
    original = aus(0.9, 0.9, 0.9503)
    perfect = aus(0.9, 0.9, 0.0)
    zero_rus = rus(0.0, 0.98)
    ok = abs(original - 0.51) <= 0.005 and perfect == 1.0 and zero_rus == 0.0
    assert record_criterion(7, "score formulas", ok,
                            f"aus(drop 0, acc_f 0.9503)={original:.4f} (0.51+-0.005), "
                            f"aus(0, 0)={perfect:.2f}, rus(0, .)={zero_rus:.2f}")


def test_c08_angle_report(nc_models):
    head = make_etf(4, 3, 0).directions.T * 2.5
    mean, ideal, pairs = weight_angle_stats(head)
    exact = abs(mean - ideal) < 1e-9 and max(abs(a - ideal) for a in pairs) < 1e-9
    trained = [weight_angle_stats(m.head)[0] for m, _ in nc_models]
    within = sum(abs(a - ideal) <= 5.0 for a in trained)
    assert record_criterion(8, "angle report", exact,
                            f"exact ETF head mean {mean:.9f} vs ideal {ideal:.9f}; "
                            f"trained C=4 sigma=0.1 heads (reported only): "
                            f"{' '.join(f'{a:.2f}' for a in trained)} deg, {within}/5 within 5 deg")


def test_c09_rmia_chance():
    scores = []
    for seed in range(10):
        g = make_rng(derive_seed(seed, "rmia-acc"))
        scores.append(rmia_linear_probe(g.standard_normal((500, 8)), g.standard_normal((500, 8)), 5, seed))
    ok = all(0.47 <= s <= 0.53 for s in scores)
    assert record_criterion(9, "rMIA chance level", ok,
                            f"per-seed accuracy {' '.join(f'{s:.3f}' for s in scores)} "
                            f"(all in [0.47, 0.53]: {ok}; mean {np.mean(scores):.4f})")


def test_c10_determinism(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"C": 4, "d": 8, "sigma": 0.05, "runs": 2,
                                  "metrics": {"rus_r": True, "bounds": True}}))
    dirs = [tmp_path / "first", tmp_path / "second"]
    for fmt in ("csv", "json"):
        for d in dirs:
            assert main(["run", str(config), "--out", str(d), "--format", fmt]) == 0
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    same = [(dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files]
    ok = all(same) and len(files) >= 10
    assert record_criterion(10, "determinism", ok,
                            f"{sum(same)}/{len(files)} files byte-identical across two `run` invocations "
                            f"(reports + checkpoints)")

