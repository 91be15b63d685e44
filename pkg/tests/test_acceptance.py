"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 4, 6, 7 and 8 are Monte Carlo experiments and carry the ``slow``
marker; deselect them with ``-m "not slow"``.
"""

import math
import time
from importlib.resources import files

import numpy as np
import pytest

from wbplab.channel_mc import StopRule, ChannelConfig, default_snr_grid, estimate_ber, stream_rng, training_batch
from wbplab.cli import ExperimentConfig, _prepare, decode_hard, loss_landscape, main, make_train_config, read_csv_body
from wbplab.gf2codes import (Code, enumerate_min_weight_dual, gf2_matmul, random_codewords, read_alist, reed_muller,
                             standard_pcm)
from wbplab.losses import KINDS
from wbplab.osd import OsdConfig, osd_decode
from wbplab.rrd import AutSampler, RrdConfig, rrd_decode
from wbplab.tanner import build_graph
from wbplab.traingrad import (DecoderSetup, Pan, TrainConfig, batch_loss, record_loss, schedule_tick, train,
                              validation_batch)
from wbplab.wbp import DecoderConfig, WeightModel, channel_llr, db_to_linear, decode, hard_decision

from oracles import HAMMING_H, SPC43_H, all_codewords, bitwise_map_llr, textbook_spa

RECIPES = files("wbplab") / "recipes"


@pytest.fixture
def report(capsys):
    def _report(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail
    return _report


def recipe(name) -> ExperimentConfig:
    return ExperimentConfig.loads((RECIPES / name).read_text())


def final_eta(tcfg: TrainConfig) -> float:
    """Discount of the multi-loss the optimizer was minimizing when training stopped."""
    return schedule_tick(tcfg, max(tcfg.steps - 1, 0))[1]


def bch63() -> Code:
    return Code.from_pcm(read_alist(files("wbplab") / "data" / "bch_63_36_cr.alist"), key="cr")


# --------------------------------------------------------------------------
# 1. gradient correctness
# --------------------------------------------------------------------------

def _random_instance(i: int):
    rng = np.random.default_rng(1000 + i)
    choice = i % 3
    if choice == 0:
        code, h, aut = Code.from_pcm(HAMMING_H), HAMMING_H, AutSampler("identity", 7)
    elif choice == 1:
        code = reed_muller(1, 3)
        h, aut = standard_pcm(code), AutSampler("rm_affine", 3)
    else:
        code = reed_muller(1, 3)
        h, aut = enumerate_min_weight_dual(code), AutSampler("rm_affine", 3)
    g = build_graph(h)
    variant = ["FW", "RNN-FW", "SS", "RNN-SS"][(i // 3) % 4]
    t = int(rng.integers(1, 4))
    rrd = RrdConfig(1, t) if (t > 1 and i % 2 == 0) else None
    use_pan = variant == "RNN-SS" and i % 5 in (0, 3)
    trainable = ["w_msg", "w_ch", "gamma"] + (["beta"] if rrd else [])
    setup = DecoderSetup(g, code.rate, variant, t, rrd, aut if rrd else None, 15.0, tuple(trainable))
    theta = setup.init_params(gamma=rng.uniform(0.05, 0.7), beta=rng.uniform(0.1, 0.9))
    theta["w_msg"] = rng.uniform(0.3, 1.5, theta["w_msg"].shape)
    theta["w_ch"] = rng.uniform(0.3, 1.5, theta["w_ch"].shape)
    pan = None
    if use_pan:
        pan = Pan.init(setup.trainable, rng)
        for layer in pan.layers.values():
            layer["b1"] = rng.uniform(-0.5, 0.5, layer["b1"].shape)
    batch = training_batch(rng.uniform(0.0, 6.0, 3), 1, code.n, code.rate, rng,
                           code if i % 4 == 1 else None)
    perms = aut.sample_batch(3 * setup.t_out).reshape(3, setup.t_out, -1) if rrd else None
    kind = KINDS[i % 3]
    eta = float(rng.uniform(0.2, 1.0))
    return setup, theta, pan, batch, perms, kind, eta


def _gradient_error(i: int, seen: dict, step: float = 1e-4) -> float:
    setup, theta, pan, batch, perms, kind, eta = _random_instance(i)
    tags = [setup.variant] + (["rrd"] if setup.rrd else []) + (["pan"] if pan else [])
    tags += ["pan+rrd"] if pan and setup.rrd else []
    for t in tags:
        seen[t] = seen.get(t, 0) + 1
    grads = record_loss(setup, theta, batch, kind, eta, pan, perms).backward()
    ana, fd = [], []
    for key, g in grads.items():
        for idx in np.ndindex(g.shape):
            vals = []
            for sgn in (1.0, -1.0):
                if pan is not None:
                    p2 = pan.copy()
                    _, name, layer = key.split(".")
                    p2.layers[name][layer] = p2.layers[name][layer].copy()
                    p2.layers[name][layer][idx] += sgn * step
                    vals.append(batch_loss(setup, theta, batch, kind, eta, p2, perms))
                else:
                    t2 = {k: v.copy() for k, v in theta.items()}
                    t2[key][idx] += sgn * step
                    vals.append(batch_loss(setup, t2, batch, kind, eta, None, perms))
            ana.append(g[idx])
            fd.append((vals[0] - vals[1]) / (2 * step))
    ana, fd = np.array(ana), np.array(fd)
    return float(np.linalg.norm(ana - fd) / max(np.linalg.norm(ana), np.linalg.norm(fd), 1e-12))


def test_c01_gradient_correctness(report):
    t0 = time.time()
    seen = {}
    errs = np.array([_gradient_error(i, seen) for i in range(200)])
    elapsed = time.time() - t0
    worst = int(np.argmax(errs))
    covered = all(seen.get(t, 0) > 0 for t in ("FW", "RNN-FW", "SS", "RNN-SS", "rrd", "pan", "pan+rrd"))
    ok = bool(errs.max() < 1e-3 and elapsed < 60 and covered)
    report(1, ok, f"200 instances {seen}, max relative error {errs.max():.2e} (instance {worst}), "
                  f"median {np.median(errs):.1e}, limit 1e-3; {elapsed:.1f}s (limit 60s)")


# --------------------------------------------------------------------------
# 2. standard BP equals a textbook sum-product reference
# --------------------------------------------------------------------------

def test_c02_standard_bp_oracle(report):
    rng = np.random.default_rng(2)
    bits_equal, worst = True, 0.0
    for h in (HAMMING_H, standard_pcm(reed_muller(2, 5))):
        g = build_graph(h)
        n = h.shape[1]
        rate = (n - h.shape[0]) / n
        for _ in range(100):
            snr = db_to_linear(rng.uniform(0, 4))
            y = 1 + rng.standard_normal(n) / math.sqrt(2 * rate * snr)
            llr = channel_llr(y, rate, snr)
            ref = textbook_spa(h, llr, 5)
            got = decode(g, None, DecoderConfig(5, 0.0), llr).final
            bits_equal &= np.array_equal(hard_decision(got), hard_decision(ref))
            worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref)))))
    ok = bits_equal and worst < 1e-9
    report(2, ok, f"200 inputs (Hamming(7,4), RM(32,16) H_std, T=5): decisions identical={bits_equal}, "
                  f"max marginal deviation {worst:.1e} (summation-order rounding, limit 1e-9)")


# --------------------------------------------------------------------------
# 3. MAP exactness on a tree
# --------------------------------------------------------------------------

def test_c03_map_on_tree(report):
    rng = np.random.default_rng(3)
    g = build_graph(SPC43_H)
    book = all_codewords(Code.from_pcm(SPC43_H).generator)
    worst = 0.0
    for _ in range(1000):
        snr = db_to_linear(rng.uniform(-2, 6))
        x = book[rng.integers(len(book))]
        y = (1 - 2.0 * x) + rng.standard_normal(4) / math.sqrt(2 * 0.75 * snr)
        llr = channel_llr(y, 0.75, snr)
        got = decode(g, None, DecoderConfig(1, 0.0, clip_max=None), llr).final
        worst = max(worst, float(np.max(np.abs(got - bitwise_map_llr(book, llr)))))
    report(3, worst < 1e-9, f"(4,3) SPC, T=1, 1000 realizations: max |m - MAP LLR| = {worst:.1e} (limit 1e-9)")


# --------------------------------------------------------------------------
# 4. loss landscape on RM(32,16) H_oc
# --------------------------------------------------------------------------

@pytest.mark.slow
def test_c04_loss_landscape(report):
    cfg = recipe("rm_oc_landscape.ini")
    assert cfg.sweep.frames >= 20000
    code, g, setup = _prepare(cfg, None)
    th = setup.init_params(1.0, 1.0, gamma=0.0)
    values = np.linspace(cfg.sweep.low, cfg.sweep.high, cfg.sweep.points)
    rows = loss_landscape(setup, th, "w_msg", values, cfg.sweep.snr_db, cfg.sweep.frames, 0.0, cfg.seed)
    ce_min = rows[int(np.argmin([r["ce"] for r in rows]))]["value"]
    sb_min = rows[int(np.argmin([r["soft_ber"] for r in rows]))]["value"]
    z = [abs(r["soft_ber"] - r["ber"]) / r["se_diff"] if r["se_diff"] > 0 else 0.0 for r in rows]
    bad = [f"{r['value']:.3f} (|d|={abs(r['soft_ber'] - r['ber']):.4f}, {zz:.0f} SE)"
           for r, zz in zip(rows, z) if zz > 3]
    ok_ce = 0.02 <= ce_min <= 0.10
    ok_sb = 0.08 <= sb_min <= 0.25
    ok_overlap = not bad
    detail = (f"CE argmin {ce_min:.3f} in [0.02,0.10]={ok_ce}; soft-BER argmin {sb_min:.3f} in [0.08,0.25]={ok_sb}; "
              f"soft-BER within 3 SE of BER at every grid point={ok_overlap}")
    if bad:
        detail += "; outside at w_msg=" + ", ".join(bad)
    report(4, ok_ce and ok_sb and ok_overlap, detail)


# --------------------------------------------------------------------------
# 5. overcomplete matrix
# --------------------------------------------------------------------------

def test_c05_overcomplete_matrix(report):
    code = reed_muller(2, 5)
    t0 = time.time()
    h = enumerate_min_weight_dual(code)
    elapsed = time.time() - t0
    ok = (h.shape == (620, 32) and bool(np.all(h.sum(axis=1) == 8)) and not gf2_matmul(h, code.generator.T).any()
          and elapsed < 1.0)
    report(5, ok, f"RM(32,16) minimum-weight dual rows: {h.shape[0]} x {h.shape[1]}, "
                  f"weights {sorted(set(h.sum(axis=1).tolist()))}, {elapsed:.2f}s (limit 1s)")


# --------------------------------------------------------------------------
# 6. near-ML with three parameters
# --------------------------------------------------------------------------

@pytest.mark.slow
def test_c06_near_ml(report):
    cfg = recipe("rm_oc_three_param.ini")
    code, g, setup = _prepare(cfg, None)
    assert setup.trainable == ("w_msg", "w_ch", "gamma") and setup.iterations == 5
    res = train(setup, make_train_config(cfg))
    theta = res.theta
    stop = StopRule(max(100, cfg.eval.min_errors), cfg.eval.max_frames)
    parts, ok = [], True
    for snr in (3.0, 4.0):
        ch = ChannelConfig(setup.rate, snr)
        w = estimate_ber(lambda l, r: decode_hard(setup, theta, l, r), ch, code.n, stop, seed=cfg.seed, code=code)
        o = estimate_ber(lambda l, r: osd_decode(code, l, OsdConfig(3)), ch, code.n, stop, seed=cfg.seed, code=code)
        ratio = w.ber / o.ber
        ok &= w.bit_errors >= 100 and o.bit_errors >= 100 and ratio <= 2.0
        parts.append(f"{snr:.0f} dB WBP {w.ber:.2e} ({w.bit_errors} err) vs OSD-3 {o.ber:.2e} "
                     f"({o.bit_errors} err), ratio {ratio:.2f}")
    params = ", ".join(f"{k}={float(theta[k]):.3f}" for k in setup.trainable)
    report(6, ok, f"RNN-SS [{params}]: " + "; ".join(parts) + " (limit ratio 2)")


# --------------------------------------------------------------------------
# 7. training gain on BCH(63,36)
# --------------------------------------------------------------------------

@pytest.mark.slow
def test_c07_training_gain(report):
    cfg = recipe("bch63_trained.ini")
    code, g, setup = _prepare(cfg, None)
    assert setup.iterations == 5 and g.h.shape == (27, 63)
    res = train(setup, make_train_config(cfg))
    bp = setup.init_params(1.0, 1.0, gamma=0.0)
    vb = validation_batch(setup, cfg.train.snr_grid_db, 200, cfg.seed + 100)
    eta = final_eta(make_train_config(cfg))
    l_bp = batch_loss(setup, bp, vb, cfg.train.loss, eta)
    l_tr = batch_loss(setup, res.theta, vb, cfg.train.loss, eta)
    stop = StopRule(max(100, cfg.eval.min_errors), cfg.eval.max_frames)
    ch = ChannelConfig(setup.rate, 6.0)
    e_bp = estimate_ber(lambda l, r: decode_hard(setup, bp, l, r), ch, code.n, stop, seed=cfg.seed, code=code)
    e_tr = estimate_ber(lambda l, r: decode_hard(setup, res.theta, l, r), ch, code.n, stop, seed=cfg.seed, code=code)
    ok = l_tr < l_bp and e_tr.ber < e_bp.ber and min(e_bp.bit_errors, e_tr.bit_errors) >= 100
    report(7, ok, f"validation multi-loss {l_tr:.4f} (trained) vs {l_bp:.4f} (BP); BER at 6 dB "
                  f"{e_tr.ber:.2e} ({e_tr.bit_errors} err) vs {e_bp.ber:.2e} ({e_bp.bit_errors} err)")


# --------------------------------------------------------------------------
# 8. parameter adapter network
# --------------------------------------------------------------------------

@pytest.mark.slow
def test_c08_pan(report):
    rng = np.random.default_rng(8)
    names = ("w_msg", "w_ch", "gamma")
    in_range = True
    for _ in range(100):
        pan = Pan.init(names, rng)
        for layer in pan.layers.values():
            for k in layer:
                layer[k] = layer[k] * rng.uniform(0.1, 30)
        out = pan.forward(rng.uniform(-20, 30, 100))
        in_range &= all(np.all((out[n] >= 0) & (out[n] <= 10)) for n in ("w_msg", "w_ch"))
        in_range &= bool(np.all((out["gamma"] >= 0) & (out["gamma"] <= 1)))

    cfg = recipe("rm_std_pan.ini")
    code, g, setup = _prepare(cfg, None)
    tcfg = make_train_config(cfg)
    fixed = train(setup, tcfg)
    adapted = train(setup, tcfg, pan=Pan.init(setup.trainable, stream_rng(cfg.seed, 12)))
    eta = final_eta(tcfg)
    worst, lines = 0.0, []
    for snr in default_snr_grid():
        vb = training_batch([snr], 2000, code.n, setup.rate, stream_rng(cfg.seed, 30, int(round(snr * 1000))))
        lf = batch_loss(setup, fixed.theta, vb, cfg.train.loss, eta)
        la = batch_loss(setup, fixed.theta, vb, cfg.train.loss, eta, pan=adapted.pan)
        worst = max(worst, la / lf)
        lines.append(f"{snr:.2f}:{la / lf:.3f}")
    ok = in_range and worst <= 1.01
    report(8, ok, f"outputs in range for 10^4 inputs={in_range}; per-SNR loss ratio PAN/fixed "
                  f"max {worst:.4f} (limit 1.01) [{' '.join(lines)}]")


# --------------------------------------------------------------------------
# 9. automorphisms
# --------------------------------------------------------------------------

def test_c09_automorphisms(report):
    rng = np.random.default_rng(9)
    failures = {}
    for label, code, sampler in (("RM(2,5) affine", reed_muller(2, 5), AutSampler("rm_affine", 5, rng)),
                                 ("BCH(63,36) cyclic+Frobenius", bch63(), AutSampler("cyclic_frobenius", 63, rng))):
        words = random_codewords(code, 200, rng)
        h = code.pcm("std")
        bad = 0
        for p in sampler.sample_batch(1000):
            bad += int(gf2_matmul(words[:, p], h.T).any(axis=1).sum())
        failures[label] = bad
    report(9, not any(failures.values()),
           "1000 permutations x 200 codewords, failures: " + ", ".join(f"{k}={v}" for k, v in failures.items()))


# --------------------------------------------------------------------------
# 10. RRD consistency
# --------------------------------------------------------------------------

def test_c10_rrd_consistency(report):
    rng = np.random.default_rng(10)
    code = reed_muller(2, 5)
    g = build_graph(enumerate_min_weight_dual(code))
    t_in, t_out = 2, 3
    weights = WeightModel.shared("SS", 6, g, rng.uniform(0.1, 0.4, 6), rng.uniform(0.8, 1.2, 6))
    cfg = DecoderConfig(t_in, 0.1)
    llr = channel_llr(1 + 0.8 * rng.standard_normal((20, 32)), 0.5, db_to_linear(2.0))

    ident = np.tile(np.arange(32), (1, t_out, 1))
    got = rrd_decode(g, weights, cfg, RrdConfig(t_in, t_out, 0.0), AutSampler("identity", 32), llr,
                     record=True, perms=ident).marginals
    x, same_reset = llr, True
    for tau in range(t_out):
        stage = WeightModel("SS", t_in, g.n_edges, 32, weights.msg[tau * t_in:(tau + 1) * t_in],
                            weights.ch[tau * t_in:(tau + 1) * t_in])
        ref = decode(g, stage, cfg, x, record=True).marginals
        same_reset &= np.array_equal(got[tau * t_in:(tau + 1) * t_in], ref)
        x = ref[-1]

    sampler = AutSampler("rm_affine", 5, rng)
    perms = sampler.sample_batch(20 * t_out).reshape(20, t_out, 32)
    got = rrd_decode(g, weights, cfg, RrdConfig(t_in, t_out, 1.0), sampler, llr, record=True, perms=perms).marginals
    first = WeightModel("SS", t_in, g.n_edges, 32, weights.msg[:t_in], weights.ch[:t_in])
    same_stage1 = True
    for b in range(20):
        p = perms[b, 0]
        ref = decode(g, first, cfg, llr[b][p], record=True).marginals
        back = np.empty_like(ref)
        back[:, p] = ref
        same_stage1 &= np.array_equal(got[:t_in, b], back)
    report(10, same_reset and same_stage1,
           f"identity permutations with beta=0 equal the reset schedule bit-exactly={same_reset}; "
           f"beta=1 stage one equals a fresh decode of permuted LLRs bit-exactly={same_stage1}")


# --------------------------------------------------------------------------
# 11. determinism of CLI outputs
# --------------------------------------------------------------------------

DET_CFG = """
[experiment]
name = det
seed = 21

[code]
family = rm
r = 1
m = 4

[matrix]
kind = oc

[decoder]
variant = RNN-SS
rrd_t_in = 1
rrd_t_out = 2
trainable = w_msg, w_ch, gamma

[train]
steps = 5
batch_per_snr = 2
snr_grid_db = 1.0, 3.0

[eval]
snr_db = 2.0, 3.0
min_errors = 50
max_frames = 1500
osd_order = 2

[sweep]
low = 0.2
high = 1.0
points = 3
snr_db = 2.0
frames = 700
"""


def test_c11_determinism(report, tmp_path):
    cfgp = tmp_path / "det.ini"
    cfgp.write_text(DET_CFG)
    runs = {}
    for tag, workers in (("a", "1"), ("b", "1"), ("c", "3")):
        out = tmp_path / tag
        base = ["--config", str(cfgp), "--workers", workers, "--out", str(out)]
        assert main(["build-matrix", *base[:2], "--out", str(out / "h.alist")]) == 0
        assert main(["train", *base]) == 0
        assert main(["evaluate", *base, "--checkpoint", str(out / "det_checkpoint.ini"), "--osd"]) == 0
        assert main(["sweep-loss", *base]) == 0
        runs[tag] = {f: read_csv_body(out / f) for f in ("det_train.csv", "det_ber.csv", "det_landscape.csv")}
        runs[tag]["h.alist"] = (out / "h.alist").read_text()
        runs[tag]["checkpoint"] = (out / "det_checkpoint.ini").read_text()
    rerun = runs["a"] == runs["b"]
    workers = runs["a"] == runs["c"]
    report(11, rerun and workers, f"train/evaluate/sweep-loss/build-matrix outputs identical on re-run={rerun}, "
                                  f"with 1 vs 3 workers={workers}")
