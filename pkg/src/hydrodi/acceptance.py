"""Acceptance checks, shared by the test suite and ``hydrodi selftest``.

Each ``criterion_*`` function returns a :class:`CriterionResult`; none of
them raise on a failed check. The synthetic scheme comparison (criteria
7 to 10) trains its models once per process and is shared.
"""
from __future__ import annotations

import functools
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines, convnet, lstm, metrics
from .integrate import (ALL_LAGS, LAG, MOVING_AVG, PROJECTION, REGULAR_AVG, REGULAR_SNAPSHOT, DiScheme,
                        assemble, assemble_series)
from .network import init_network, net_backward, net_forward
from .numerics import make_rng
from .preprocess import gamma_inverse, gamma_transform

CAMELS_ENV = "HYDRODI_CAMELS_ROOT"


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool | None  # None means skipped
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "SKIP" if self.passed is None else ("PASS" if self.passed else "FAIL")
        return f"{status} [{self.number:2d}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kw) -> CriterionResult:
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kw)
            return CriterionResult(number, name, passed, detail, time.perf_counter() - t0)

        run.number = number
        return run

    return wrap


# --- 1. gradients -------------------------------------------------------------


def _grad_errors(params: dict, loss, grads: dict, eps: float = 1e-5) -> tuple[float, int]:
    """Worst relative error and count of entries failing ``rel < 1e-4`` with an absolute floor of 1e-8."""
    worst, bad = 0.0, 0
    for name, p in params.items():
        flat, g = p.reshape(-1), grads[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = loss()
            flat[j] = orig - eps
            fm = loss()
            flat[j] = orig
            num = (fp - fm) / (2 * eps)
            diff = abs(num - g[j])
            rel = diff / max(abs(num), abs(g[j]), 1e-300)
            worst = max(worst, rel)
            bad += diff > 1e-8 and rel >= 1e-4
    return worst, bad


def _perturb(params: dict, rng, scale=0.3):
    for p in params.values():
        p += scale * rng.normal(size=p.shape)


def gradient_report(seed: int = 0) -> dict[str, tuple[float, int]]:
    rng = make_rng(seed)
    out = {}
    T, B, n, H = 5, 2, 3, 4
    I = rng.normal(size=(T, B, n))
    dy = rng.normal(size=(T, B, 1))
    for tag, kp in (("lstm", 1.0), ("lstm+dropout", 0.5)):
        w = lstm.init_weights(n, H, rng)
        _perturb(dict(w.items()), rng)
        masks = lstm.make_masks(rng, B, H, kp) if kp < 1 else None
        _, cache = lstm.forward(I, w, masks)
        g, _ = lstm.backward(cache, w, dy, masks)
        out[tag] = _grad_errors(dict(w.items()), lambda: float((lstm.forward(I, w, masks)[0] * dy).sum()),
                                dict(g.items()))

    cfg = convnet.ConvConfig(12, (convnet.ConvLayer(3, 2, 2), convnet.ConvLayer(3, 2, 1)),
                             pool_bins=2, output_width=3)
    cw = convnet.init_conv_weights(cfg, rng)
    _perturb(cw, rng)
    win = rng.normal(size=(4, 12))
    dout = rng.normal(size=(4, 3))
    _, cc = convnet.conv_forward(win, cw, cfg)
    cg, _ = convnet.conv_backward(cc, cw, dout)
    out["conv"] = _grad_errors(cw, lambda: float((convnet.conv_forward(win, cw, cfg)[0] * dout).sum()), cg)

    for tag, kp in (("conv+lstm", 1.0), ("conv+lstm+dropout", 0.5)):
        net = init_network(n, H, rng, cfg)
        _perturb(net.params, rng)
        wins = rng.normal(size=(T, B, 12))
        dyn = rng.normal(size=(T, B))
        masks = lstm.make_masks(rng, B, H, kp) if kp < 1 else None
        _, nc = net_forward(net, I, wins, masks)
        ng = net_backward(net, nc, dyn)
        out[tag] = _grad_errors(net.params, lambda: float((net_forward(net, I, wins, masks)[0] * dyn).sum()), ng)

    ap = baselines.init_ann(5, (8, 8), rng)
    _perturb(ap, rng)
    X = rng.normal(size=(6, 5))
    da = rng.normal(size=6)
    _, ac = baselines.ann_forward(ap, X)
    out["ann"] = _grad_errors(ap, lambda: float((baselines.ann_forward(ap, X)[0] * da).sum()),
                              baselines.ann_backward(ap, ac, da))
    return out


@_timed(1, "gradient correctness")
def criterion_1():
    rep = gradient_report()
    bad = sum(b for _, b in rep.values())
    worst = max(w for w, _ in rep.values())
    return bad == 0, f"worst raw rel err {worst:.2e} over {', '.join(rep)}; {bad} entries over 1e-4"


# --- 2. metrics ---------------------------------------------------------------


def _ref_metrics(obs, sim) -> dict:
    """Loop-based references written independently of :mod:`metrics`."""
    pairs = [(o, s) for o, s in zip(obs, sim) if o == o and s == s]
    n = len(pairs)
    o = [p[0] for p in pairs]
    s = [p[1] for p in pairs]
    mo = sum(o) / n
    ms = sum(s) / n
    sso = sum((x - mo) ** 2 for x in o)
    sss = sum((x - ms) ** 2 for x in s)
    sse = sum((x - y) ** 2 for x, y in pairs)
    ref = {}
    ref["nse"] = math.nan if sso == 0 else 1 - sse / sso
    so = sum(o)
    ref["bias"] = math.nan if so == 0 else 100 * (sum(s) - so) / so
    cov = sum((x - mo) * (y - ms) for x, y in pairs)
    ref["corr"] = math.nan if sso == 0 or sss == 0 else max(-1.0, min(1.0, cov / math.sqrt(sso * sss)))

    def segment_bias(sel):
        if n < 50:
            return math.nan
        den = sum(x for x, _ in sel)
        return math.nan if den == 0 else 100 * (sum(y for _, y in sel) - den) / den

    def quantile(q):
        srt = sorted(o)
        pos = q * (n - 1)
        lo_i = int(math.floor(pos))
        hi_i = min(lo_i + 1, n - 1)
        return srt[lo_i] + (pos - lo_i) * (srt[hi_i] - srt[lo_i])

    hi = quantile(0.98)
    lo = quantile(0.30)
    ref["fhv"] = segment_bias([p for p in pairs if p[0] >= hi])
    ref["flv"] = segment_bias([p for p in pairs if p[0] <= lo])
    if sso == 0 or sss == 0 or mo == 0:
        ref["kge"] = math.nan
    else:
        r = ref["corr"]
        a = math.sqrt(sss / n) / math.sqrt(sso / n)
        b = ms / mo
        ref["kge"] = 1 - math.sqrt((r - 1) ** 2 + (a - 1) ** 2 + (b - 1) ** 2)
    ss = [x for x in obs if x == x]
    m = sum(ss) / len(ss)
    den = sum((x - m) ** 2 for x in ss)
    ref["acf1"] = math.nan if den == 0 else sum((ss[i] - m) * (ss[i + 1] - m) for i in range(len(ss) - 1)) / den
    return ref


def metric_pairs(seed: int = 0, n: int = 100):
    rng = make_rng(seed)
    for i in range(n):
        size = int(rng.integers(60, 400))
        obs = rng.lognormal(0, 1, size)
        sim = obs * rng.lognormal(0, 0.3, size) + rng.normal(0, 0.1, size)
        if i % 10 == 1:
            obs = np.full(size, 2.5)  # constant observations
        elif i % 10 == 2:
            obs[obs < np.quantile(obs, 0.5)] = 0.0  # zero low-flow segment
        elif i % 10 == 3:
            obs[rng.random(size) < 0.1] = np.nan
        yield obs, sim


def _same(a: float, b: float, tol: float) -> bool:
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return abs(a - b) <= tol * max(1.0, abs(b))


@_timed(2, "metric oracle equivalence")
def criterion_2():
    bad, checked, undefined = [], 0, 0
    funcs = {"bias": metrics.bias_pct, "nse": metrics.nse, "flv": metrics.flv, "fhv": metrics.fhv,
             "corr": metrics.corr, "kge": metrics.kge}
    for i, (obs, sim) in enumerate(metric_pairs()):
        ref = _ref_metrics(obs, sim)
        got = {k: f(obs, sim) for k, f in funcs.items()}
        got["acf1"] = metrics.acf1(obs)
        for k, v in got.items():
            checked += 1
            undefined += math.isnan(v)
            if not _same(v, ref[k], 1e-10):
                bad.append(f"pair {i} {k}: {v} vs {ref[k]}")
    flags_ok = (math.isnan(metrics.nse(np.full(80, 1.0), np.arange(80.0)))
                and "flv" in metrics.evaluate(np.r_[np.zeros(60), np.ones(140)], np.ones(200)).undefined)
    detail = f"{checked} values, {undefined} undefined, {len(bad)} mismatches"
    if bad:
        detail += "; first: " + bad[0]
    return not bad and flags_ok, detail + ("" if flags_ok else "; undefined flags wrong")


# --- 3. integration -----------------------------------------------------------


TABLE_SCHEMES = ("projection", "DI(1)", "DI(3)", "DI(7)", "DI(30)", "DI(3)-M", "DI(3)-Rs", "DI(3)-Ra",
                 "DI(3)-A", "DI(7)-A", "CNN-DI(1,10)", "CNN-DI(2,15)")


def enumerate_window(scheme: DiScheme, obs: np.ndarray, t: int, anchor: int = 0):
    """Plain-loop construction of ``(y_p1, y_p2)`` for step ``t``; indices before 0 read as zero."""
    def at(i):
        return obs[i] if i >= 0 else 0.0

    v, n = scheme.variant, scheme.n
    if v == PROJECTION:
        return [], []
    if v == LAG:
        return [at(t - n)], []
    if v == ALL_LAGS:
        return [at(i) for i in range(t - n, t)], []
    if v == MOVING_AVG:
        return [sum(at(i) for i in range(t - n, t)) / n], []
    if v == REGULAR_SNAPSHOT:
        # latest cycle boundary strictly before t
        hits = [i for i in range(anchor, t) if (i - anchor) % n == 0]
        return [at(hits[-1]) if hits else 0.0], []
    if v == REGULAR_AVG:
        # latest cycle that finished before t
        done = [c for c in range(anchor, t, n) if c + n <= t]
        return [sum(at(i) for i in range(done[-1], done[-1] + n)) / n if done else 0.0], []
    p1 = scheme.p1
    return [at(i) for i in range(t - p1, t)], [at(i) for i in range(t - n, t - p1)]


def integration_mismatches(seed: int = 0, T: int = 80) -> list[str]:
    rng = make_rng(seed)
    obs = rng.normal(size=T)
    bad = []
    for tag in TABLE_SCHEMES:
        sch = DiScheme.parse(tag)
        y1, y2 = assemble_series(sch, obs)
        for t in range(T):
            e1, e2 = enumerate_window(sch, obs, t)
            if not (np.allclose(y1[t], e1, atol=1e-12, rtol=0) and np.allclose(y2[t], e2, atol=1e-12, rtol=0)):
                bad.append(f"{tag} t={t}")
                break
            if t >= sch.n:
                w = assemble(sch, obs, t)
                if not (np.allclose(w.y_p1, e1, atol=1e-12, rtol=0) and np.allclose(w.y_p2, e2, atol=1e-12, rtol=0)):
                    bad.append(f"{tag} per-step t={t}")
                    break
        # future poisoning: values at indices >= t must not matter
        for t in (0, T // 3, T - 1):
            poisoned = obs.copy()
            poisoned[t:] = 1e6
            p1, p2 = assemble_series(sch, poisoned)
            if not (np.array_equal(p1[: t + 1], y1[: t + 1]) and np.array_equal(p2[: t + 1], y2[: t + 1])):
                bad.append(f"{tag} reads index >= {t}")
                break
    return bad


@_timed(3, "DI assembly causality and correctness")
def criterion_3():
    bad = integration_mismatches()
    return not bad, f"{len(TABLE_SCHEMES)} schemes, mismatches: {bad[:3] if bad else 'none'}"


# --- 4. transform -------------------------------------------------------------


@_timed(4, "transform roundtrip")
def criterion_4():
    v = np.linspace(0.0, 1e4, 10_000)
    back = gamma_inverse(gamma_transform(v))
    err = np.abs(back - v) / np.maximum(1.0, v)
    return bool(err.max() < 1e-12), f"max error relative to max(1, v): {err.max():.2e}"


# --- 5. optimizer -------------------------------------------------------------


def memorization_rmse(steps: int = 2000, days: int = 30, hidden: int = 128, seed: int = 0) -> tuple[float, int, float]:
    """Projection network fit to one month of one synthetic basin.

    Returns ``(best, step, final)``: the transformed-space RMSE of the best
    weights seen within ``steps`` updates (recomputed from those weights),
    the step they occurred at, and the RMSE after the last update.
    """
    from .dataset import prepare_dataset
    from .synth import synth_generate
    from .train import TrainConfig, TrainedModel, predict, train_model

    recs, _ = synth_generate(1, seed, "high_acf", n_days=2 * days)
    d = recs[0].dates
    ds = prepare_dataset(recs, (str(d[0]), str(d[days - 1])), (str(d[days]), str(d[-1])))
    cfg = TrainConfig(batch_size=1, hidden_size=hidden, rho=days, epochs=steps, batches_per_epoch=1,
                      keep_prob=1.0, seeds=(seed,))
    best = {"loss": math.inf, "step": -1, "net": None}

    def keep(step, loss, net):
        if loss < best["loss"]:
            best.update(loss=loss, step=step, net=net.copy())

    scheme = DiScheme.parse("projection")
    model = train_model(ds, scheme, cfg, on_batch=keep)
    target = ds.basins[0].target[:days]
    ok = np.isfinite(target)

    def rmse(m):
        pred = predict(m, ds, 0, 0, days, warmup=0)
        return float(np.sqrt(np.mean((pred[ok] - target[ok]) ** 2)))

    return rmse(TrainedModel(best["net"], scheme, seed)), best["step"], rmse(model)


def adadelta_first_step() -> float:
    from .train import AdadeltaState, adadelta_step

    params = {"x": np.zeros(1)}
    adadelta_step(params, {"x": np.ones(1)}, AdadeltaState(decay=0.9, eps=1e-6, lr=1.0))
    return float(params["x"][0])


@_timed(5, "optimizer sanity")
def criterion_5(steps: int = 2000):
    step = adadelta_first_step()
    hand = -1e-3 / math.sqrt(0.100001)
    best, at, final = memorization_rmse(steps)
    ok = abs(step - hand) < 1e-8 and best < 0.01
    return ok, (f"first step {step:.10f} (hand {hand:.10f}); memorization RMSE {best:.4f} at step {at} "
                f"of {steps} (last iterate {final:.4f})")


# --- 6. AR --------------------------------------------------------------------


@_timed(6, "AR recovery")
def criterion_6():
    alpha, c = 0.83, 0.4
    y = np.empty(40)
    y[0] = 10.0  # far from the fixed point so the lag column stays informative
    for t in range(1, y.size):
        y[t] = c + alpha * y[t - 1]
    model = baselines.fit_ar(y, None, 1)
    # closed-form OLS oracle via the 2x2 normal equations
    x, z = y[:-1], y[1:]
    n, sx, sz, sxx, sxz = x.size, x.sum(), z.sum(), (x * x).sum(), (x * z).sum()
    a_hat = (n * sxz - sx * sz) / (n * sxx - sx * sx)
    c_hat = (sz - a_hat * sx) / n
    errs = [abs(model.alpha[0] - alpha), abs(model.intercept - c), abs(a_hat - alpha), abs(c_hat - c)]
    return max(errs) < 1e-8, f"alpha {model.alpha[0]:.12f}, intercept {model.intercept:.12f}, max err {max(errs):.1e}"


# --- 7 to 10. synthetic scheme comparison ------------------------------------


@dataclass(frozen=True)
class SuiteConfig:
    n_basins: int = 20
    seed: int = 7
    train_years: int = 3
    test_years: int = 2
    hidden: int = 32
    batch_size: int = 20
    rho: int = 365
    epochs: int = 100
    batches_per_epoch: int = 10
    keep_prob: float = 1.0
    schemes: tuple = ("projection", "DI(1)", "DI(3)", "DI(7)", "DI(30)", "DI(3)-Ra", "DI(3)-Rs",
                      "DI(3)-M", "DI(3)-A", "CNN-DI(1,100)")


@dataclass
class SuiteResult:
    config: SuiteConfig
    nse: dict = field(default_factory=dict)  # tag -> per-basin NSE array
    acf1: np.ndarray | None = None
    seconds: dict = field(default_factory=dict)

    def median(self, tag: str) -> float:
        return float(np.nanmedian(self.nse[tag]))


def run_suite(cfg: SuiteConfig = SuiteConfig(), schemes=None) -> SuiteResult:
    from .dataset import prepare_dataset
    from .synth import synth_generate
    from .train import TrainConfig, forecast, train_model

    days = 365 * (cfg.train_years + cfg.test_years)
    recs, _ = synth_generate(cfg.n_basins, cfg.seed, "high_acf", n_days=days)
    d = recs[0].dates
    cut = 365 * cfg.train_years
    ds = prepare_dataset(recs, (str(d[0]), str(d[cut - 1])), (str(d[cut]), str(d[-1])))
    tcfg = TrainConfig(batch_size=cfg.batch_size, hidden_size=cfg.hidden, rho=cfg.rho, epochs=cfg.epochs,
                       batches_per_epoch=cfg.batches_per_epoch, keep_prob=cfg.keep_prob, seeds=(0,))
    res = SuiteResult(cfg, acf1=np.array([metrics.acf1(r.discharge) for r in recs]))
    for tag in schemes or cfg.schemes:
        t0 = time.perf_counter()
        model = train_model(ds, DiScheme.parse(tag), tcfg)
        vals = []
        for k, b in enumerate(ds.basins):
            a, e = b.test
            vals.append(metrics.nse(b.q_native[a:e], forecast(model, ds, k, a, e)))
        res.nse[tag] = np.array(vals)
        res.seconds[tag] = time.perf_counter() - t0
    return res


@functools.lru_cache(maxsize=None)
def shared_suite() -> SuiteResult:
    return run_suite()


@_timed(7, "DI benefit direction")
def criterion_7(suite: SuiteResult | None = None):
    s = suite or shared_suite()
    gain = s.median("DI(1)") - s.median("projection")
    frac = float(np.mean(s.nse["DI(1)"] > s.nse["projection"]))
    ok = gain >= 0.05 and frac >= 0.8 and bool(np.all(s.acf1 > 0.95))
    return ok, (f"median NSE DI(1) {s.median('DI(1)'):.3f} vs projection {s.median('projection'):.3f} "
                f"(gain {gain:+.3f}); {frac:.0%} of basins improve; min ACF(1) {s.acf1.min():.3f}")


@_timed(8, "lag decay")
def criterion_8(suite: SuiteResult | None = None):
    s = suite or shared_suite()
    seq = ["DI(1)", "DI(3)", "DI(7)", "DI(30)"]
    med = [s.median(t) for t in seq]
    ok = all(med[i + 1] <= med[i] + 0.02 for i in range(len(med) - 1))
    return ok, "medians " + ", ".join(f"{t} {m:.3f}" for t, m in zip(seq, med))


@_timed(9, "scheme ordering spot-check")
def criterion_9(suite: SuiteResult | None = None):
    s = suite or shared_suite()
    ok = s.median("DI(3)-A") >= s.median("DI(3)") - 0.02
    order = ["DI(3)", "DI(3)-Ra", "DI(3)-Rs", "DI(3)-M", "DI(3)-A"]
    listed = ", ".join(f"{t} {s.median(t):.3f}" for t in order if t in s.nse)
    return ok, f"reported ordering: {listed}"


@_timed(10, "CNN-DI parity")
def criterion_10(suite: SuiteResult | None = None):
    s = suite or shared_suite()
    diff = s.median("CNN-DI(1,100)") - s.median("DI(1)")
    return abs(diff) <= 0.05, f"CNN-DI(1,100) {s.median('CNN-DI(1,100)'):.3f} vs DI(1) {s.median('DI(1)'):.3f} ({diff:+.3f})"


# --- 11. CAMELS, data-gated -----------------------------------------------------


@_timed(11, "CAMELS DI(1) over projection")
def criterion_11(root: str | None = None):
    root = root or os.environ.get(CAMELS_ENV)
    if not root:
        return None, f"set {CAMELS_ENV} to a converted CAMELS extract to run"
    from .experiment import ExperimentConfig, run_experiment

    med = {}
    for tag in ("projection", "DI(1)"):
        cfg = ExperimentConfig(scheme=tag, data_root=root,
                               out_dir=os.path.join(root, "_acceptance", tag.replace("(", "").replace(")", "")))
        out = run_experiment(cfg)
        from .report import load_metrics

        med[tag] = float(np.nanmedian(load_metrics(out)[2]["nse"]))
    ok = med["DI(1)"] > med["projection"] > 0
    return ok, (f"median NSE DI(1) {med['DI(1)']:.3f}, projection {med['projection']:.3f} "
                f"(published full-scale values 0.86 and 0.73)")


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11)


def run_all(only=None) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        if only and fn.number not in only:
            continue
        r = fn()
        print(r.line(), flush=True)
        results.append(r)
    return results
