"""Command-line front end.

Subcommands: build-matrix, train, evaluate, sweep-loss. Experiments are
described by an INI document (see ``wbplab/recipes``); every CSV written
starts with ``#`` lines holding the resolved config and the matrix hash.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import kvdoc
from .channel_mc import (BER_COLUMNS, NOISE_STREAM, ChannelConfig, StopRule, ber_row, estimate_ber,
                         stream_rng, transmit)
from .errors import NumericError, WbpError
from .gf2codes import Code, enumerate_min_weight_dual, read_alist, reed_muller, standard_pcm, write_alist
from .losses import multi_loss_from_llr
from .osd import OsdConfig, osd_decode
from .rrd import AutSampler, RrdConfig, cascade_forward
from .tanner import TannerGraph, build_graph
from .traingrad import (DecoderSetup, Pan, TrainConfig, dump_checkpoint, load_checkpoint, theta_at, train)
from .wbp import channel_llr, forward

log = logging.getLogger("wbplab")

RECIPES = Path(__file__).with_name("recipes")
DATA = Path(__file__).with_name("data")


# --------------------------------------------------------------------------
# Experiment config
# --------------------------------------------------------------------------

@dataclass
class CodeSection:
    family: str = "rm"              # rm | alist
    r: int = 2
    m: int = 5
    path: str = ""                  # alist file for family = alist
    automorphisms: str = "auto"     # auto | rm_affine | cyclic_frobenius | identity


@dataclass
class MatrixSection:
    kind: str = "oc"                # std | oc | file
    path: str = ""


@dataclass
class DecoderSection:
    variant: str = "RNN-SS"
    iterations: int = 5
    damping: float = 0.0
    clip_max: float = 15.0
    rrd_t_in: int = 0               # 0 disables RRD
    rrd_t_out: int = 0
    beta: float = 0.5
    pan: bool = False
    trainable: tuple[str, ...] = ("w_msg", "w_ch")
    init_w_msg: float = 1.0
    init_w_ch: float = 1.0


@dataclass
class TrainSection:
    steps: int = 0
    batch_per_snr: int = 10
    snr_grid_db: tuple[float, ...] = (1.0, 1.7777777777777777, 2.5555555555555554, 3.3333333333333335,
                                      4.111111111111111, 4.888888888888889, 5.666666666666667,
                                      6.444444444444445, 7.222222222222222, 8.0)
    loss: str = "soft-ber"
    lr: float = 1e-3
    lr_decay: float = 0.8
    eta: float = 1.0
    eta_decay: float = 0.5
    decay_every: int = 5000
    grad_clip: float = 0.1
    log_every: int = 1


@dataclass
class EvalSection:
    snr_db: tuple[float, ...] = (3.0, 4.0)
    min_errors: int = 100
    max_frames: int = 1000000
    osd_order: int = 3


@dataclass
class SweepSection:
    param: str = "w_msg"
    low: float = 0.0
    high: float = 0.6
    points: int = 25
    snr_db: float = 3.0
    frames: int = 20000
    eta: float = 0.0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    code: CodeSection = field(default_factory=CodeSection)
    matrix: MatrixSection = field(default_factory=MatrixSection)
    decoder: DecoderSection = field(default_factory=DecoderSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    SECTIONS = ("code", "matrix", "decoder", "train", "eval", "sweep")

    def dumps(self) -> str:
        doc = {"experiment": {"name": self.name, "seed": self.seed}}
        for s in self.SECTIONS:
            doc[s] = asdict(getattr(self, s))
        return kvdoc.dumps(doc)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        doc = kvdoc.loads(text)
        unknown = set(doc) - set(cls.SECTIONS) - {"experiment"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        top = doc.get("experiment", {})
        cfg = cls(name=top.get("name", "experiment"), seed=int(top.get("seed", 0)))
        for s in cls.SECTIONS:
            setattr(cfg, s, _section_from(getattr(cfg, s).__class__, doc.get(s, {})))
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())


def _convert(hint: str, raw: str):
    raw = raw.strip()
    if hint == "bool":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if hint == "int":
        return int(raw)
    if hint == "float":
        return float(raw)
    if hint.startswith("tuple[float"):
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if hint.startswith("tuple[str"):
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    return raw


def _section_from(cls, items: dict[str, str]):
    known = {f.name: f for f in fields(cls)}
    extra = set(items) - set(known)
    if extra:
        raise ValueError(f"unknown keys in [{cls.__name__}]: {sorted(extra)}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key, raw in items.items():
        hint = hints[key]
        name = getattr(hint, "__name__", None) if not typing.get_args(hint) else str(hint).replace("typing.", "")
        kwargs[key] = _convert(name, raw)
    return cls(**kwargs)


# --------------------------------------------------------------------------
# Building blocks
# --------------------------------------------------------------------------

def resolve_path(p: str, base: Path | None) -> Path:
    path = Path(p)
    if path.is_absolute() or path.exists():
        return path
    for root in filter(None, (base, DATA)):
        if (root / p).exists():
            return root / p
    return path


def load_code(sec: CodeSection, base: Path | None = None) -> Code:
    if sec.family == "rm":
        return reed_muller(sec.r, sec.m)
    if sec.family == "alist":
        path = resolve_path(sec.path, base)
        return Code.from_pcm(read_alist(path), name=path.stem)
    raise ValueError(f"unknown code family {sec.family!r}")


def load_matrix(code: Code, sec: MatrixSection, code_sec: CodeSection, base: Path | None = None) -> np.ndarray:
    if sec.kind == "std":
        return standard_pcm(code)
    if sec.kind == "oc":
        return enumerate_min_weight_dual(code)
    if sec.kind == "file":
        path = resolve_path(sec.path or code_sec.path, base)
        return read_alist(path)
    raise ValueError(f"unknown matrix kind {sec.kind!r}")


def make_sampler(code: Code, sec: CodeSection) -> AutSampler:
    fam = sec.automorphisms
    if fam == "auto":
        fam = "rm_affine" if sec.family == "rm" else "cyclic_frobenius"
    param = sec.m if fam == "rm_affine" else code.n
    return AutSampler(fam, param)


def make_setup(cfg: ExperimentConfig, code: Code, graph: TannerGraph) -> DecoderSetup:
    d = cfg.decoder
    rrd = RrdConfig(d.rrd_t_in, d.rrd_t_out, d.beta) if d.rrd_t_out > 0 else None
    iters = rrd.iterations if rrd else d.iterations
    return DecoderSetup(graph, code.k / code.n, d.variant, iters, rrd,
                        make_sampler(code, cfg.code) if rrd else None,
                        d.clip_max if d.clip_max > 0 else None, tuple(d.trainable))


def make_train_config(cfg: ExperimentConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(steps=t.steps, batch_per_snr=t.batch_per_snr, snr_grid_db=t.snr_grid_db, loss=t.loss,
                       lr=t.lr, lr_decay=t.lr_decay, eta=t.eta, eta_decay=t.eta_decay,
                       decay_every=t.decay_every, grad_clip=t.grad_clip, seed=cfg.seed, log_every=t.log_every)


def decode_hard(setup: DecoderSetup, theta: dict, llr: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    marg = decode_marginals(setup, theta, llr, rng, record=False)
    return (marg[-1] < 0).astype(np.uint8)


def decode_marginals(setup: DecoderSetup, theta: dict, llr: np.ndarray, rng, record: bool = True) -> np.ndarray:
    wm, wc = setup.weight_model(theta).expand()
    if setup.rrd is not None:
        b = llr.shape[0]
        perms = setup.sampler.with_rng(rng).sample_batch(b * setup.t_out).reshape(b, setup.t_out, -1)
        marg, _ = cascade_forward(setup.graph, llr, wm, wc, theta["gamma"], theta["beta"], setup.t_in, perms,
                                  setup.clip_max)
        return marg
    marg, _ = forward(setup.graph, llr, wm, wc, theta["gamma"], setup.iterations, setup.clip_max, record=record)
    return marg


def header_lines(command: str, cfg: ExperimentConfig, digest: str, extra: dict | None = None) -> str:
    out = [f"# wbplab {command}", f"# matrix_hash = {digest}"]
    for k, v in (extra or {}).items():
        out.append(f"# {k} = {v}")
    out.append("# config:")
    out += ["# " + line if line else "#" for line in cfg.dumps().rstrip("\n").split("\n")]
    return "\n".join(out) + "\n"


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def read_csv_body(path) -> str:
    """CSV content without the ``#`` provenance header."""
    return "".join(line for line in Path(path).read_text().splitlines(keepends=True) if not line.startswith("#"))


# --------------------------------------------------------------------------
# Loss landscape
# --------------------------------------------------------------------------

SWEEP_COLUMNS = ("value", "ce", "nss", "soft_ber", "ber")
SWEEP_CHUNK = 200


def _sweep_chunk(setup, theta_grid, code_n, rate, snr_db, eta, seed, chunk, frames):
    y = transmit(np.zeros((frames, code_n), dtype=np.uint8), ChannelConfig(rate, snr_db),
                 stream_rng(seed, NOISE_STREAM, chunk))
    llr = channel_llr(y, rate, ChannelConfig(rate, snr_db).snr)
    x = np.zeros_like(y)
    out = np.zeros((len(theta_grid), 6))
    for i, theta in enumerate(theta_grid):
        marg = decode_marginals(setup, theta, llr, stream_rng(seed, 1, chunk))
        stats = []
        for kind in ("ce", "nss", "soft-ber"):
            _, per, _ = multi_loss_from_llr(kind, eta, x, marg)
            stats.append(per.sum())
        _, per_sb, _ = multi_loss_from_llr("soft-ber", eta, x, marg)
        per_ber = (marg[-1] < 0).mean(axis=1)
        diff = per_sb - per_ber
        out[i] = stats + [per_ber.sum(), diff.sum(), (diff * diff).sum()]
    return out


def loss_landscape(setup: DecoderSetup, base_theta: dict, param: str, values, snr_db: float, frames: int,
                   eta: float = 0.0, seed: int = 0, workers: int = 1) -> list[dict]:
    """Mean losses and BER per grid value on one frozen set of all-zero frames.

    Each row also carries ``se_diff``, the standard error of the per-frame
    difference between soft-BER and BER.
    """
    grid = []
    for v in values:
        th = {k: np.array(a, dtype=float) for k, a in base_theta.items()}
        th[param] = np.full_like(th[param], float(v))
        grid.append(th)
    n = setup.graph.n_vars
    chunks = [(c, min(SWEEP_CHUNK, frames - c * SWEEP_CHUNK)) for c in range(-(-frames // SWEEP_CHUNK))]
    args = [(setup, grid, n, setup.rate, snr_db, eta, seed, c, sz) for c, sz in chunks]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _sweep_chunk(*a), args))
    else:
        parts = [_sweep_chunk(*a) for a in args]
    total = np.zeros((len(grid), 6))
    for p in parts:            # fixed chunk order keeps sums worker-independent
        total += p
    rows = []
    for v, t in zip(values, total):
        if frames == 0:
            rows.append(dict(value=float(v), ce=np.nan, nss=np.nan, soft_ber=np.nan, ber=np.nan, se_diff=np.nan))
            continue
        mean_d = t[4] / frames
        var_d = max(t[5] / frames - mean_d ** 2, 0.0)
        rows.append(dict(value=float(v), ce=t[0] / frames, nss=t[1] / frames, soft_ber=t[2] / frames,
                         ber=t[3] / frames, se_diff=float(np.sqrt(var_d / max(frames - 1, 1)))))
    return rows


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_cfg(args) -> tuple[ExperimentConfig, Path | None]:
    if not args.config:
        raise SystemExit("error: --config is required")
    path = Path(args.config)
    if not path.exists():
        for name in (path.name, path.name + ".ini"):
            if (RECIPES / name).exists():
                path = RECIPES / name
                break
    cfg = ExperimentConfig.load(path)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg, path.parent


def _prepare(cfg: ExperimentConfig, base):
    code = load_code(cfg.code, base)
    h = load_matrix(code, cfg.matrix, cfg.code, base)
    graph = build_graph(h)
    return code, graph, make_setup(cfg, code, graph)


def cmd_build_matrix(args) -> int:
    if args.config:
        cfg, base = _load_cfg(args)
        code_sec = cfg.code
        kind = args.kind or cfg.matrix.kind
    else:
        if not args.code:
            raise SystemExit("error: give a code spec (rm R M | alist PATH) or --config")
        fam, *rest = args.code
        if fam == "rm" and len(rest) == 2:
            code_sec = CodeSection("rm", int(rest[0]), int(rest[1]))
        elif fam == "alist" and len(rest) == 1:
            code_sec = CodeSection("alist", path=rest[0])
        else:
            raise SystemExit("error: code spec must be 'rm R M' or 'alist PATH'")
        base, kind = None, args.kind or "std"
    code = load_code(code_sec, base)
    h = load_matrix(code, MatrixSection(kind), code_sec, base)
    out = Path(args.out) if args.out else Path(f"{code.name or 'code'}_{kind}.alist".replace("/", "_"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_alist(out, h)
    print(f"{h.shape[0]} x {h.shape[1]} -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg, base = _load_cfg(args)
    code, graph, setup = _prepare(cfg, base)
    tcfg = make_train_config(cfg)
    theta = setup.init_params(cfg.decoder.init_w_msg, cfg.decoder.init_w_ch,
                              gamma=cfg.decoder.damping if "gamma" not in setup.trainable else None,
                              beta=cfg.decoder.beta if "beta" not in setup.trainable else None)
    pan = Pan.init(setup.trainable, stream_rng(cfg.seed, 12)) if cfg.decoder.pan else None
    out = _out_dir(args, cfg)
    log_path = out / f"{cfg.name}_train.csv"
    ckpt_path = out / f"{cfg.name}_checkpoint.ini"
    cols = None
    with open(log_path, "w", newline="") as fh:
        fh.write(header_lines("train", cfg, graph.digest))

        def on_row(row):
            nonlocal cols
            if cols is None:
                cols = list(row)
                fh.write(",".join(cols) + "\n")
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
            fh.flush()

        try:
            res = train(setup, tcfg, theta, pan, code, on_row=on_row)
        except NumericError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
    ckpt_path.write_text(dump_checkpoint(setup, res.theta, res.pan, res.state, {"name": cfg.name}))
    if res.pan is None:
        scal = {k: float(v) for k, v in res.theta.items() if np.size(v) == 1 and (k != "beta" or setup.rrd)}
        print(" ".join(f"{k}={v:.6g}" for k, v in scal.items()))
    print(f"checkpoint -> {ckpt_path}\nlog -> {log_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg, base = _load_cfg(args)
    code, graph, setup = _prepare(cfg, base)
    pan = None
    if args.checkpoint:
        ck = load_checkpoint(Path(args.checkpoint).read_text())
        if ck.model.get("matrix_hash") != graph.digest:
            print(f"error: checkpoint matrix hash {ck.model.get('matrix_hash')} does not match {graph.digest}",
                  file=sys.stderr)
            return 2
        theta, pan, tag = ck.theta, ck.pan, "wbp"
    else:
        theta = setup.init_params(1.0, 1.0, gamma=cfg.decoder.damping, beta=cfg.decoder.beta)
        tag = "bp"
    if setup.rrd is not None:
        tag += "-rrd"
    stop = StopRule(cfg.eval.min_errors, cfg.eval.max_frames)
    rows = []
    mname = cfg.matrix.kind
    for snr in cfg.eval.snr_db:
        th = theta_at(theta, pan, snr)
        ch = ChannelConfig(setup.rate, snr)
        est = estimate_ber(lambda llr, rng, th=th: decode_hard(setup, th, llr, rng), ch, code.n, stop,
                           seed=cfg.seed, workers=args.workers, code=code)
        rows.append(ber_row(code.name or cfg.code.family, mname, tag, snr, est, cfg.seed))
        if args.osd:
            oc = OsdConfig(cfg.eval.osd_order)
            est = estimate_ber(lambda llr, rng: osd_decode(code, llr, oc), ch, code.n, stop,
                               seed=cfg.seed, workers=args.workers, code=code)
            rows.append(ber_row(code.name or cfg.code.family, mname, f"osd{oc.order}", snr, est, cfg.seed))
    out = _out_dir(args, cfg) / f"{cfg.name}_ber.csv"
    out.write_text(header_lines("evaluate", cfg, graph.digest, {"checkpoint": args.checkpoint or "none"})
                   + csv_text(BER_COLUMNS, rows))
    print(f"ber -> {out}")
    return 0


def cmd_sweep_loss(args) -> int:
    cfg, base = _load_cfg(args)
    code, graph, setup = _prepare(cfg, base)
    s = cfg.sweep
    theta = setup.init_params(cfg.decoder.init_w_msg, cfg.decoder.init_w_ch,
                              gamma=cfg.decoder.damping, beta=cfg.decoder.beta)
    values = np.linspace(s.low, s.high, s.points) if s.points > 1 else np.array([s.low])
    rows = loss_landscape(setup, theta, s.param, values, s.snr_db, s.frames, s.eta, cfg.seed, args.workers)
    body = csv_text(SWEEP_COLUMNS, [[repr(float(r[c])) for c in SWEEP_COLUMNS] for r in rows])
    out = _out_dir(args, cfg) / f"{cfg.name}_landscape.csv"
    out.write_text(header_lines("sweep-loss", cfg, graph.digest) + body)
    print(f"landscape -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment INI file (or the name of a bundled recipe)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--workers", type=int, default=1, help="Monte Carlo worker threads")
    common.add_argument("--out", help="output directory (output file for build-matrix)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="wbplab", description="Weighted belief-propagation decoding lab.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("build-matrix", parents=[common], help="write a parity-check matrix as alist")
    p.add_argument("code", nargs="*", help="rm R M | alist PATH")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--std", dest="kind", action="store_const", const="std", help="N-K row standard matrix")
    g.add_argument("--oc", dest="kind", action="store_const", const="oc", help="all minimum-weight dual codewords")
    p.set_defaults(func=cmd_build_matrix)
    p = sub.add_parser("train", parents=[common], help="train decoder parameters")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("evaluate", parents=[common], help="Monte Carlo BER")
    p.add_argument("--checkpoint", help="trained parameters; standard BP if omitted")
    p.add_argument("--osd", action="store_true", help="add OSD benchmark rows")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("sweep-loss", parents=[common], help="loss landscape over one scalar parameter")
    p.set_defaults(func=cmd_sweep_loss)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (WbpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
