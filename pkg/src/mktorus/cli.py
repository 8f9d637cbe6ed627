"""``mktorus`` command line.

Every subcommand appends JSON-lines records to ``--report`` (if given) and
prints a short summary. ``--config file.json`` supplies option defaults
(keys are option names with dashes or underscores); explicit flags win.
``MKTORUS_SEED`` overrides every ``--seed``. With ``--check`` a command
exits 1 when its built-in assertion fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import activation as act
from . import circuits as C
from . import distdec, report, tlwe, wire
from .backend import make_backend
from .ml import data as D
from .ml import train as T
from .torus import NoiseParams, NoiseSampler

log = logging.getLogger("mktorus")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated, JSON-serializable description of one run."""

    command: str
    params: dict = field(default_factory=dict)
    scale: dict = field(default_factory=dict)
    act: dict = field(default_factory=dict)
    dataset: str | None = None
    backend: str = "clear"
    output: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        return cls(**json.loads(text))


def _scale(args) -> T.ScaleConfig:
    try:
        return T.ScaleConfig(q=args.q, alpha=getattr(args, "alpha_int", 4),
                             alpha1=getattr(args, "alpha1", 4), alpha2=getattr(args, "alpha2", 4),
                             beta1=getattr(args, "beta1", 8), beta2=getattr(args, "beta2", 8),
                             width=args.width, rounding=args.rounding)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _act(args) -> act.ActSpec:
    try:
        return act.ActSpec(args.activation, args.q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_config(args) -> RunConfig:
    params = {k: getattr(args, k) for k in ("n", "parties", "alpha", "seed") if hasattr(args, k)}
    scale = asdict(_scale(args)) if hasattr(args, "q") else {}
    acts = asdict(_act(args)) if hasattr(args, "activation") and hasattr(args, "q") else {}
    return RunConfig(args.command, params, scale, acts, getattr(args, "data", None),
                     getattr(args, "backend", "clear"), getattr(args, "report", None))


def demo_keys(n: int, k: int, alpha: float, seed: int):
    """Deterministic parameters, keys and an encryption sampler from one seed."""
    params = tlwe.setup(n, k, NoiseParams(alpha, seed))
    root = NoiseSampler(params.noise)
    streams = root.spawn(k + 1)
    keys = [tlwe.keygen(params, i + 1, streams[i])[0] for i in range(k)]
    return params, keys, streams[k]


def _emit(args, records) -> None:
    if args.report:
        report.append(args.report, records)
    for r in records:
        print(json.dumps(report.payload(r), sort_keys=True))


# -- commands ----------------------------------------------------------------

def cmd_keygen(args) -> int:
    params, keys, _ = demo_keys(args.n, args.parties, args.alpha, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "params.json").write_text(json.dumps(
        {"n": args.n, "k": args.parties, "alpha": args.alpha, "seed": args.seed}, sort_keys=True))
    for sk in keys:
        (out / f"sk{sk.party_index}.bin").write_bytes(tlwe.secret_key_to_bytes(sk))
    _emit(args, [report.make_record("keygen", parties=args.parties, n=args.n, alpha=args.alpha,
                                    seed=args.seed)])
    return EXIT_OK


def _load_keys(keydir):
    keydir = Path(keydir)
    meta = json.loads((keydir / "params.json").read_text())
    params = tlwe.setup(meta["n"], meta["k"], NoiseParams(meta["alpha"], meta["seed"]))
    keys = [tlwe.secret_key_from_bytes((keydir / f"sk{i}.bin").read_bytes())[0]
            for i in range(1, meta["k"] + 1)]
    return params, keys


def _parse_bits(text: str) -> np.ndarray:
    if not text or set(text) - {"0", "1"}:
        raise ConfigError(f"--bits must be a non-empty 0/1 string, got {text!r}")
    return np.array([int(c) for c in text], dtype=np.uint8)


def cmd_encrypt(args) -> int:
    params, keys = _load_keys(args.keys)
    if not 1 <= args.party <= params.k:
        raise ConfigError(f"--party must be in [1, {params.k}]")
    if args.bits:
        mu = _parse_bits(args.bits)
    else:
        mu = np.random.default_rng(args.seed).integers(0, 2, args.random).astype(np.uint8)
    sampler = NoiseSampler(NoiseParams(params.noise.alpha, args.seed))
    ct = tlwe.extend(tlwe.encrypt_bit(mu, keys[args.party - 1], params, sampler), params.k)
    Path(args.out).write_bytes(tlwe.ciphertext_to_bytes(ct))
    ok = True
    if args.check:
        ok = bool(np.array_equal(tlwe.decrypt_naive(ct, keys), mu))
    _emit(args, [report.make_record("encrypt", party=args.party, bits=len(mu), parties=params.k,
                                    out=args.out, check=ok if args.check else None)])
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _tcp_session(ct, keys, params, seed, session, bits, addr="127.0.0.1:0"):
    """Hub plus one thread per participant over loopback sockets."""
    k = len(keys)
    ready, bound, box, errors = threading.Event(), [], {}, []
    setup = wire.encode_setup(params.n, k, params.noise.alpha, seed, bits)

    def hub():
        try:
            box["transcript"] = distdec.serve_hub(addr, k, setup, session, ready=ready, bound=bound)
        except BaseException as exc:
            errors.append(exc)
            ready.set()

    th = threading.Thread(target=hub)
    th.start()
    ready.wait()
    if errors:
        raise errors[0]
    host, port = bound[0][:2]
    res = {}

    def client(i):
        try:
            res[i] = distdec.run_participant_client(f"{host}:{port}", ct, keys[i], seed + i, session,
                                                    upload_ct=(i == 0))
        except BaseException as exc:
            errors.append(exc)

    clients = [threading.Thread(target=client, args=(i,)) for i in range(k)]
    for t in clients:
        t.start()
    for t in clients:
        t.join()
    th.join()
    if errors:
        raise errors[0]
    bits0 = res[0][0]
    if any(not np.array_equal(res[i][0], bits0) for i in res):
        raise distdec.ProtocolAbort("participants disagree")
    return bits0.reshape(ct.batch_shape), len(box["transcript"])


def cmd_distdec_demo(args) -> int:
    params, keys, enc = demo_keys(args.n, args.parties, args.alpha, args.seed)
    if args.connect:
        if not 1 <= args.party <= args.parties:
            raise ConfigError("--connect needs --party in [1, parties]")
        ok = True
        for g in range(args.groups):
            mu = enc.bits(args.bits)
            ct = tlwe.encrypt_joint(mu, keys, params, enc)
            bits, _, _ = distdec.run_participant_client(args.connect, ct, keys[args.party - 1],
                                                        args.seed * 1000 + g, g,
                                                        upload_ct=(args.party == 1))
            ok &= bool(np.array_equal(bits, mu))
        print(json.dumps({"party": args.party, "accuracy": 1.0 if ok else 0.0}))
        return EXIT_OK if ok or not args.check else EXIT_CHECK_FAILED
    if args.listen:
        for g in range(args.groups):
            setup = wire.encode_setup(args.n, args.parties, args.alpha, args.seed, args.bits)
            t = distdec.serve_hub(args.listen, args.parties, setup, g)
            log.info("session %d done, %d messages", g, len(t))
        return EXIT_OK
    correct = total = messages = 0
    agree = True
    t0 = time.perf_counter()
    for g in range(args.groups):
        mu = enc.bits(args.bits)
        ct = tlwe.encrypt_joint(mu, keys, params, enc)
        if args.transport == "tcp":
            bits, msgs = _tcp_session(ct, keys, params, args.seed, g, args.bits)
        else:
            r = distdec.distributed_decrypt(ct, keys, seed=args.seed * 1000 + g, session=g,
                                            threaded=args.transport == "thread")
            bits, msgs = r.bits, len(r.transcript)
        correct += int(np.sum(bits == mu))
        total += mu.size
        messages = msgs
        agree &= bool(np.array_equal(bits, tlwe.decrypt_naive(ct, keys)))
    seconds = time.perf_counter() - t0
    accuracy = correct / total
    _emit(args, [report.make_record("distdec", parties=args.parties, bits=args.bits,
                                    groups=args.groups, alpha=args.alpha, n=args.n,
                                    transport=args.transport, accuracy=accuracy,
                                    matches_naive=agree, messages=messages, seconds=seconds)])
    ok = accuracy == 1.0 and agree
    return EXIT_OK if ok or not args.check else EXIT_CHECK_FAILED


def cmd_bench_activation(args) -> int:
    be = make_backend(args.backend, seed=args.seed)
    res = act.gate_cost(args.function, args.width, be)
    records = [report.make_record("activation_cost", function=args.function, width=args.width,
                                  backend=args.backend, bootstrapped=res["bootstrapped"],
                                  free=res["free"], seconds=res["seconds"])]
    ok = True
    if args.compare_g and args.function != "g":
        base = act.gate_cost("g", args.width, make_backend(args.backend, seed=args.seed))
        records.insert(0, report.make_record("activation_cost", function="g", width=args.width,
                                             backend=args.backend, bootstrapped=base["bootstrapped"],
                                             free=base["free"], seconds=base["seconds"]))
        ratio = res["bootstrapped"] / base["bootstrapped"]
        lo, hi = (5, 20) if args.function == "taylor7" else (2, 10)
        ok = lo <= ratio <= hi
    _emit(args, records)
    return EXIT_OK if ok or not args.check else EXIT_CHECK_FAILED


def cmd_gen_data(args) -> int:
    X, y = D.make_synthetic(args.samples, args.features, args.noise, args.seed, args.spread)
    D.write_csv(args.out, X, y)
    _emit(args, [report.make_record("dataset", samples=args.samples, features=args.features,
                                    noise=args.noise, seed=args.seed, out=args.out)])
    return EXIT_OK


def _lr_data(args):
    if args.data:
        X, y, _ = D.read_csv(args.data)
        name = Path(args.data).name
    else:
        X, y = D.make_synthetic(seed=args.seed, **{k: v for k, v in D.SYNTHETIC_DEFAULTS.items()
                                                   if k != "seed"})
        name = "synthetic"
    if args.max_samples:
        X, y = X[:args.max_samples], y[:args.max_samples]
    if set(np.unique(y)) - {0, 1}:
        raise ConfigError("logistic regression needs labels in {0, 1}")
    return X, y, name


def cmd_train_lr(args) -> int:
    cfg, spec = _scale(args), _act(args)
    if args.mode != "float" and spec.kind == "sigmoid":
        raise ConfigError("--activation sigmoid is only available with --mode float")
    X, y, name = _lr_data(args)
    if args.mode == "float":
        Xf = D.add_bias(X, 1.0)
    else:
        try:
            Xf = D.add_bias(D.preprocess(X, "rounding", width=args.width).X)
        except OverflowError as exc:
            raise ConfigError(f"{exc}; raise --width") from None
    be = make_backend(args.backend, seed=args.seed) if args.mode == "enc" else None
    t0 = time.perf_counter()
    if be is not None:
        with be.count() as gates:
            model = T.train_lr(Xf, y, cfg, spec.kind, args.mode, args.iters, backend=be)
    else:
        model = T.train_lr(Xf, y, cfg, spec.kind, args.mode, args.iters)
    seconds = time.perf_counter() - t0
    acc = float((T.predict_lr(model, Xf) == y).mean())
    ok = acc >= args.min_accuracy
    if args.mode == "enc":
        ref = T.train_lr(Xf, y, cfg, spec.kind, "int", args.iters)
        same = all(np.array_equal(a, b) for a, b in zip(model.history, ref.history))
        ok &= same
        rec = report.make_record("cipher_accuracy", model="lr", dataset=name, backend=args.backend,
                                 activation=spec.kind, accuracy=acc, matches_int=same,
                                 bootstrapped=gates.bootstrapped_gates, iters=args.iters,
                                 seconds=seconds)
    else:
        rec = report.make_record("plain_accuracy", model="lr", dataset=name, mode=args.mode,
                                 activation=spec.kind, accuracy=acc, iters=args.iters,
                                 seconds=seconds)
    _emit(args, [rec])
    return EXIT_OK if ok or not args.check else EXIT_CHECK_FAILED


def cmd_train_nn(args) -> int:
    cfg, spec = _scale(args), _act(args)
    if args.mode != "float" and spec.kind == "sigmoid":
        raise ConfigError("--activation sigmoid is only available with --mode float")
    if args.data:
        X, y, _ = D.read_csv(args.data)
        name = Path(args.data).name
    else:
        X, y = D.load_iris()
        name = "iris"
    Xtr, Xte, ytr, yte = D.split_half(X, y, args.split_seed)
    if args.max_samples:
        Xtr, ytr = Xtr[:args.max_samples], ytr[:args.max_samples]
    mu, sd = Xtr.mean(axis=0), Xtr.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Ztr, Zte = (Xtr - mu) / sd, (Xte - mu) / sd
    classes = int(max(y.max(), 1)) + 1
    Y = D.one_hot(ytr, classes)
    if args.mode == "float":
        tr, te = D.add_bias(Ztr, 1.0), D.add_bias(Zte, 1.0)
    else:
        try:
            tr = D.add_bias(D.preprocess(Ztr, "zoom", args.q, args.width).X, args.q)
            te = D.add_bias(D.preprocess(Zte, "zoom", args.q, args.width).X, args.q)
        except OverflowError as exc:
            raise ConfigError(f"{exc}; raise --width") from None
    be = make_backend(args.backend, seed=args.seed) if args.mode == "enc" else None
    t0 = time.perf_counter()
    track = "epoch" if args.mode == "enc" else "none"
    if be is not None:
        with be.count() as gates:
            model = T.train_nn(tr, Y, cfg, args.hidden, spec.kind, args.mode, args.epochs,
                               args.seed, backend=be, track=track)
    else:
        model = T.train_nn(tr, Y, cfg, args.hidden, spec.kind, args.mode, args.epochs, args.seed,
                           track=track)
    seconds = time.perf_counter() - t0
    acc = float((T.predict_nn(model, te) == yte).mean())
    ok = acc >= args.min_accuracy
    if args.mode == "enc":
        ref = T.train_nn(tr, Y, cfg, args.hidden, spec.kind, "int", args.epochs, args.seed,
                         track=track)
        same = all(np.array_equal(a, b) for ha, hb in zip(model.history, ref.history)
                   for a, b in zip(ha, hb))
        ok &= same
        rec = report.make_record("cipher_accuracy", model="nn", dataset=name, backend=args.backend,
                                 activation=spec.kind, accuracy=acc, matches_int=same,
                                 bootstrapped=gates.bootstrapped_gates, epochs=args.epochs,
                                 seconds=seconds)
    else:
        rec = report.make_record("plain_accuracy", model="nn", dataset=name, mode=args.mode,
                                 activation=spec.kind, accuracy=acc, epochs=args.epochs,
                                 seconds=seconds)
    _emit(args, [rec])
    return EXIT_OK if ok or not args.check else EXIT_CHECK_FAILED


def cmd_report(args) -> int:
    text = report.render_markdown(report.read(args.input))
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

NN_DEFAULTS = {"q": 256, "width": 20, "hidden": 6, "epochs": 40, "alpha1": 16, "alpha2": 16,
               "beta1": 192, "beta2": 192, "rounding": "nearest", "seed": 1}
LR_DEFAULTS = {"q": 64, "width": 16, "alpha_int": 1, "iters": 40, "rounding": "floor", "seed": 7}


def _common(p, report_flag=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check", action="store_true", help="exit 1 if the run's assertion fails")
    if report_flag:
        p.add_argument("--report", help="append JSON-lines records to this file")


def _training(p, defaults):
    p.add_argument("--data", help="CSV with header; last column is the label")
    p.add_argument("--mode", choices=T.MODES, default="int")
    p.add_argument("--activation", choices=act.KINDS, default="g")
    p.add_argument("--backend", choices=("clear", "noisesim"), default="clear")
    p.add_argument("--q", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--rounding", choices=("floor", "nearest"))
    p.add_argument("--max-samples", type=int, default=0, help="train on the first N samples only")
    p.add_argument("--min-accuracy", type=float, default=0.0)
    _common(p)
    p.set_defaults(**defaults)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mktorus", description=__doc__.splitlines()[0].replace("``", ""))
    parser.add_argument("--config", help="JSON file of option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate k secret keys into a directory")
    p.add_argument("--parties", type=int, default=2)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--alpha", type=float, default=2.0 ** -15)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encrypt", help="encrypt bits under one party's key")
    p.add_argument("--keys", required=True, help="directory written by keygen")
    p.add_argument("--party", type=int, default=1)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--bits", help="bit string such as 0110")
    g.add_argument("--random", type=int, help="encrypt this many random bits")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("distdec-demo", help="distributed decryption with two servers")
    p.add_argument("--parties", type=int, default=2)
    p.add_argument("--bits", type=int, default=1000)
    p.add_argument("--groups", type=int, default=10)
    p.add_argument("--alpha", type=float, default=2.0 ** -15)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--transport", choices=("inline", "thread", "tcp"), default="inline")
    p.add_argument("--listen", help="host the servers on HOST:PORT")
    p.add_argument("--connect", help="join a hub at HOST:PORT as --party")
    p.add_argument("--party", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_distdec_demo)

    p = sub.add_parser("bench-activation", help="gate count and time of one activation")
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--function", choices=("g", "taylor3", "taylor7"), default="g")
    p.add_argument("--backend", choices=("clear", "noisesim"), default="clear")
    p.add_argument("--compare-g", action="store_true", help="also bench g and check the ratio")
    _common(p)
    p.set_defaults(func=cmd_bench_activation)

    p = sub.add_parser("gen-data", help="write a seeded synthetic linear dataset")
    for name in ("samples", "features"):
        p.add_argument(f"--{name}", type=int, default=D.SYNTHETIC_DEFAULTS[name])
    for name in ("noise", "spread"):
        p.add_argument(f"--{name}", type=float, default=D.SYNTHETIC_DEFAULTS[name])
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_gen_data, seed=D.SYNTHETIC_DEFAULTS["seed"])

    p = sub.add_parser("train-lr", help="logistic regression by batch gradient descent")
    p.add_argument("--iters", type=int)
    p.add_argument("--alpha-int", type=int, help="integer learning rate in [0, q]")
    _training(p, LR_DEFAULTS)
    p.set_defaults(func=cmd_train_lr)

    p = sub.add_parser("train-nn", help="one-hidden-layer network with momentum")
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    for name in ("alpha1", "alpha2", "beta1", "beta2"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--split-seed", type=int, default=0)
    _training(p, NN_DEFAULTS)
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("report", help="render JSON-lines records as Markdown tables")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(conf, dict):
            parser.error("config file must hold a JSON object")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
        conf.pop("command", None)
        known = vars(args)
        unknown = sorted(set(conf) - set(known))
        if unknown:
            parser.error(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        # re-parse so explicit flags override the file
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**conf)
        args = parser.parse_args(argv)
    env_seed = os.environ.get("MKTORUS_SEED")
    if env_seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env_seed)
        except ValueError:
            parser.error(f"MKTORUS_SEED must be an integer, got {env_seed!r}")
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run_config(args)
        return args.func(args)
    except (ConfigError, distdec.ProtocolAbort, C.WidthError, FileNotFoundError) as exc:
        print(f"mktorus {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
