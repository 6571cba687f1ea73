"""Command-line entry point: optimize, simulate, validate, ledger-demo.

Scenarios are flat ``key = value`` files with one line per constant; ``#``
starts a comment. Values may be integers, decimals, scientific notation or
exact ratios such as ``1454/7``.
"""
from __future__ import annotations

import argparse
import csv
import random
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import ledger, simulator, validation
from .optimizer import INT_FIELDS, ScenarioConstants, ceil3, enumerate_optimal, scenario_field_names
from .powmodel import MiningDesign

EXTRA_KEYS = ("seed", "mode", "grid")
BUNDLED = ("C1", "C2", "C3")


class ScenarioError(ValueError):
    pass


class UsageError(Exception):
    pass


def _number(key: str, text: str):
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(f"{key}: malformed number {text!r}") from None
    if key in INT_FIELDS:
        if value.denominator != 1:
            raise ScenarioError(f"{key}: expected an integer, got {text!r}")
        return int(value)
    return float(value)


def read_scenario_text(text: str, source: str = "<scenario>"):
    """Parse scenario text into (constants, extras)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ScenarioError(f"{source}:{lineno}: expected key = value")
        if key in raw:
            raise ScenarioError(f"{source}:{lineno}: duplicate key {key}")
        raw[key] = value.strip()
    names = scenario_field_names()
    unknown = sorted(set(raw) - set(names) - set(EXTRA_KEYS))
    if unknown:
        raise ScenarioError(f"{source}: unknown keys {', '.join(unknown)}")
    missing = [n for n in names if n not in raw]
    if missing:
        raise ScenarioError(f"{source}: missing keys {', '.join(missing)}")
    values = {n: _number(n, raw[n]) for n in names}
    try:
        constants = ScenarioConstants(**values)
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    extras = {k: raw[k] for k in EXTRA_KEYS if k in raw}
    if "seed" in extras:
        try:
            extras["seed"] = int(extras["seed"])
        except ValueError:
            raise ScenarioError(f"seed: malformed integer {extras['seed']!r}") from None
        if not 0 <= extras["seed"] < 2 ** 64:
            raise ScenarioError("seed must fit in 64 bits")
    return constants, extras


def _resolve(path_or_name) -> tuple:
    name = str(path_or_name)
    if name in BUNDLED:
        text = resources.files("mining_calculus.scenarios").joinpath(f"{name}.txt").read_text()
        return text, name
    try:
        return Path(name).read_text(), name
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {name}: {exc.strerror}") from None


def load_scenario(path_or_name):
    """(constants, extras) from a file path or a bundled name (C1, C2, C3)."""
    text, source = _resolve(path_or_name)
    return read_scenario_text(text, source)


def parse_scenario(path_or_name) -> ScenarioConstants:
    return load_scenario(path_or_name)[0]


def format_scenario(constants: ScenarioConstants, extras: dict | None = None) -> str:
    lines = [f"{k} = {v!r}" for k, v in constants.as_dict().items()]
    lines += [f"{k} = {v}" for k, v in (extras or {}).items()]
    return "\n".join(lines) + "\n"


def write_scenario(constants: ScenarioConstants, path, extras: dict | None = None) -> None:
    Path(path).write_text(format_scenario(constants, extras))


def _header(out, constants: ScenarioConstants | None, settings: dict) -> None:
    out.write("# effective constants\n")
    if constants is not None:
        for k, v in constants.as_dict().items():
            out.write(f"# {k} = {v!r}\n")
    for k, v in settings.items():
        out.write(f"# {k} = {v}\n")


def cmd_optimize(args, out) -> int:
    constants, _ = load_scenario(args.scenario or "C1")
    _header(out, constants, {"tier_digits": args.tier_digits})
    results = enumerate_optimal(constants, digits=args.tier_digits)
    if not results:
        out.write("no robustly feasible tuple\n")
        return 0
    rows = [(c.s, c.r, c.d, str(ceil3(c.cost)), str(ceil3(c.robust_cost))) for c in results]
    out.write(f"{'s':>4} {'r':>4} {'d':>4} {'cost':>16} {'robust_cost':>16}\n")
    for s, r, d, c, rc in rows:
        out.write(f"{s:>4} {r:>4} {d:>4} {c:>16} {rc:>16}\n")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "r", "d", "cost", "robust_cost"])
            w.writerows(rows)
    return 0


def _sim_settings(args):
    extras = {}
    constants = None
    if args.scenario:
        constants, extras = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else extras.get("seed", 0)
    mode = args.mode or extras.get("mode", "geometric")
    grid = args.grid or extras.get("grid", "full:d<=16")
    try:
        mode = simulator.Mode(mode)
        designs = simulator.parse_grid(grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must fit in 64 bits")
    if args.races is not None and args.races < 1:
        raise UsageError("--races must be positive")
    settings = {"seed": seed, "mode": mode.value, "grid": grid,
                "races": args.races if args.races is not None else "floor(10000/s)"}
    return constants, designs, mode, seed, settings


def _run(designs, mode, seed, races):
    return simulator.run_corpus(designs, mode, seed, races)


def cmd_simulate(args, out) -> int:
    constants, designs, mode, seed, settings = _sim_settings(args)
    _header(out, constants, settings)
    corpus = _run(designs, mode, seed, args.races)
    target = Path(args.out) if args.out else None
    if target:
        target.mkdir(parents=True, exist_ok=True)
    out.write(f"{'s':>4} {'r':>4} {'d':>4} {'races':>7} {'failures':>9} {'mean_rounds':>14}\n")
    for rec in corpus:
        d = rec.config.design
        rounds = rec.winner_rounds()
        mean = f"{rounds.mean():.6f}" if len(rounds) else "-"
        out.write(f"{d.s:>4} {d.r:>4} {d.d:>4} {rec.race_count:>7} "
                  f"{rec.race_count - rec.success_count():>9} {mean:>14}\n")
        if target:
            simulator.write_campaign(rec, target / simulator.campaign_filename(d))
    return 0


def _fmt(x):
    return "-" if x is None else f"{x:.6g}"


def cmd_validate(args, out) -> int:
    constants, designs, mode, seed, settings = _sim_settings(args)
    if args.campaigns:
        files = sorted(Path(args.campaigns).glob("campaign_*.txt"))
        if not files:
            raise UsageError(f"no campaign files in {args.campaigns}")
        corpus = [simulator.read_campaign(f) for f in files]
        settings = {"campaigns": args.campaigns}
    else:
        corpus = _run(designs, mode, seed, args.races)
    _header(out, constants, settings)
    summaries = [validation.summarize(c) for c in corpus]

    out.write("\n# corpus summary (max, mean)\n")
    for name, (mx, mean) in validation.corpus_summary(summaries).items():
        out.write(f"{name:<24} {_fmt(mx):>12} {_fmt(mean):>12}\n")

    out.write("\n# expected-rounds abs error vs failure threshold x\n")
    out.write(f"{'x':>6} {'count':>6} {'max':>12} {'mean':>12}\n")
    for p in validation.threshold_curves(summaries):
        out.write(f"{p.x:>6.2f} {p.count:>6} {_fmt(p.max):>12} {_fmt(p.mean):>12}\n")

    db = validation.build_database(corpus)
    out.write("\n# dispute error database: share of entries with abs_error < 0.1\n")
    out.write(f"{'A':<14} {'|A|':>7} {'|A&B|':>7} {'pct':>5}\n")
    for d in sorted({e.d for e in db}):
        _query_line(out, db, f"d={d}")
    for ratio in (0, 1, 10, 100, 1000, 10000):
        _query_line(out, db, f"ratio={ratio}")
    if args.out:
        target = Path(args.out)
        target.mkdir(parents=True, exist_ok=True)
        validation.write_database(db, target / "dispute_errors.csv")
    return 0


def _query_line(out, db, A):
    res = validation.query(db, A, "abs_error<0.1")
    pct = "-" if res.percent is None else str(res.percent)
    out.write(f"{A:<14} {res.a:>7} {res.b:>7} {pct:>5}\n")


def cmd_ledger_demo(args, out) -> int:
    seed = args.seed if args.seed is not None else 0
    design = MiningDesign(4, 16, 8)
    k = 4
    _header(out, None, {"seed": seed, "design": f"s={design.s} r={design.r} d={design.d}", "depth": k})
    rng = random.Random(seed)
    chain = ledger.Chain()
    triples = [ledger.submit(f"payment {i} {rng.getrandbits(64):016x}".encode()) for i in range(6)]
    for t in triples:
        out.write(f"submit {t.input.decode()} -> {t.digest.hex()[:16]}\n")
    for batch in (triples[:3], triples[3:5]):
        block = _mine(chain, [t.digest for t in batch], design, rng)
        chain.append(block)
        out.write(f"mined block {block.height} nonce={block.nonce} digest={block.digest.hex()[:16]}\n")
    for _ in range(2):
        block = _mine(chain, [ledger.digest_of(rng.getrandbits(64).to_bytes(8, "big"))], design, rng)
        chain.append(block)
        out.write(f"mined block {block.height} nonce={block.nonce} digest={block.digest.hex()[:16]}\n")
    triples = ledger.confirm(chain, triples)
    out.write(f"chain height {chain.current_height}, valid={ledger.verify_chain(chain)}\n")
    for t in triples:
        verdict = ledger.audit(t, chain, k)
        out.write(f"audit {t.input.decode()} location={t.location} -> {verdict.value}\n")
    forged = ledger.AuthTriple(b"forged payment", ledger.digest_of(b"forged payment"), 1)
    stale = ledger.AuthTriple(b"edited " + triples[0].input, triples[0].digest, triples[0].location)
    for label, t in (("forged", forged), ("edited", stale)):
        out.write(f"audit {label} location={t.location} -> {ledger.audit(t, chain, k).value}\n")
    if args.out:
        Path(args.out).write_bytes(ledger.dump_chain(chain))
    return 0


def _mine(chain, digests, design, rng):
    # a failed race is retried with a fresh filler transaction
    while True:
        try:
            return ledger.mine_block(digests, chain, design)
        except ledger.MiningFailure:
            digests = digests + [ledger.digest_of(rng.getrandbits(64).to_bytes(8, "big"))]


COMMANDS = {
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "ledger-demo": cmd_ledger_demo,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mining-calculus", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scenario", help="scenario file or bundled name C1/C2/C3")
    p.add_argument("--out", help="output file (optimize, ledger-demo) or directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=[m.value for m in simulator.Mode])
    p.add_argument("--tier-digits", type=int, default=60)
    p.add_argument("--races", type=int)
    p.add_argument("--grid", help="'full', 'full:d<=16' or 's=4,8;r=8;d=4,8'")
    p.add_argument("--campaigns", help="validate: read campaign files from this directory")
    return p


def dispatch(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        if args.tier_digits < 30:
            raise UsageError("--tier-digits must be at least 30")
        return COMMANDS[args.command](args, out)
    except (UsageError, ScenarioError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
