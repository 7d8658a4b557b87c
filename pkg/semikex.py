"""
Command line for the semiring key exchange.

    py semikex.py semiring verify sr_vault/maze20.tbl
    py semikex.py params gen --total 20 --n 4 --seed 1 -o p.skxp
    py semikex.py exchange local --params p.skxp --seed 7

Exit codes: 0 on success, 1 on a domain failure, 2 on a usage error.
"""

__all__ = ["cli", "dispatch"]

# Standard Library
import json
import logging
import os
import sys
import threading
from pathlib import Path

# Dependencies
import click
import numpy as np

# Internal
from settings import SemikexError, dir_path, load_config, configure_logging
from semiring import (
    load_table_file, validate_axioms, is_congruence_simple, irreducibility_witness, center, monico_profile,
)
from circulant import CirculantNat
from paramgen import generate_params, encode_params, decode_params, params_digest
from kex import PublicKeyMsg, keygen, canonical_encode, decode_vector, key_fingerprint, encode_private_key
from attacks import (
    brute_force_attack, random_attack, uniqueness_experiment, render_text, render_kv, render_json, render_csv,
)
from netkex import LoopbackStream, run_initiator, run_responder, serve as serve_forever, connect as connect_once
from bench import bench_setup, bench_act


log = logging.getLogger("semikex")


def _progress() -> bool:
    return sys.stderr.isatty()


def _table(ctx: click.Context, path: str | None):
    if path is None:
        path = ctx.obj["config"]["paramgen"]["table"]
        if not os.path.isabs(path):
            path = dir_path / path
    return load_table_file(path, max_size=ctx.obj["config"]["semiring"]["max_size"])


def _read_params(ctx: click.Context, path: str, table_path: str | None):
    table = _table(ctx, table_path)
    return decode_params(Path(path).read_bytes(), table)


def _read_pk(path: str, table) -> PublicKeyMsg:
    data = Path(path).read_bytes()
    vec, end = decode_vector(data, table)
    if end != len(data):
        raise SemikexError(f"{path}: {len(data) - end} trailing bytes after the public key")
    return PublicKeyMsg(vec)


def _emit(report, emit: str) -> None:
    if emit == "csv":
        click.echo(render_csv([report.as_dict()]), nl=False)
    else:
        render = {"text": render_text, "kv": render_kv, "json": render_json}[emit]
        click.echo(render(report))


def _int_list(ctx, param, value: str) -> list[int]:
    try:
        out = [int(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from None
    if not out or min(out) < 1:
        raise click.BadParameter("values must be positive")
    return out


params_option = click.option("--params", "params_path", required=True, type=click.Path(exists=True, dir_okay=False),
                             help="Parameter file written by 'params gen'.")
table_option = click.option("--table", "table_path", type=click.Path(exists=True, dir_okay=False), default=None,
                            help="Semiring table the parameters were generated over.")
seed_option = click.option("--seed", type=int, default=None, help="Seed for every random choice.")
emit_option = click.option("--emit", type=click.Choice(["text", "kv", "json", "csv"]), default="text")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="User TOML file merged over default_config.toml.")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None)
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, log_level: str | None):
    config = load_config(config_path)
    if log_level is not None:
        config["program"]["log_level"] = log_level.upper()
    configure_logging(config)
    ctx.obj = {"config": config}


@cli.group()
def semiring():
    """Inspect finite semiring tables."""


@semiring.command("verify")
@click.argument("table_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def semiring_verify(ctx: click.Context, table_path: str):
    t = _table(ctx, table_path)
    report = validate_axioms(t)
    simple = is_congruence_simple(t) if report.valid else None
    witness = irreducibility_witness(t)

    click.echo(
        f"axioms: {report.summary()}, "
        f"congruence-simple: {'n/a' if simple is None else 'yes' if simple else 'no'}, "
        f"irreducibility witness: {t.names[witness] if witness is not None else 'none'}"
    )
    click.echo("center: " + " ".join(t.names[x] for x in sorted(center(t))))
    if simple is not None and not simple:
        click.echo(f"proper congruence: {simple.congruence.render(t)}")
    if not report.valid:
        raise SemikexError(f"{table_path} is not a semiring")


@semiring.command("classify")
@click.argument("table_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def semiring_classify(ctx: click.Context, table_path: str):
    t = _table(ctx, table_path)
    profile = monico_profile(t)
    for key, value in vars(profile).items():
        if key == "absorbing_infinity" and value is not None:
            value = t.names[value]
        click.echo(f"{key.replace('_', '-')}: {value}")
    cases = profile.candidate_cases
    click.echo("candidate cases: " + (",".join(map(str, cases)) if cases else "none"))


@cli.group()
def params():
    """Generate public parameters."""


@params.command("gen")
@click.option("--total", type=int, default=None, help="Matrix size; the partition covers it.")
@click.option("--n", "n", type=int, default=None, help="Length of the commuting vector.")
@click.option("--bound", type=int, default=None, help="Upper bound on private circulant entries.")
@click.option("--max-degree", type=int, default=None)
@click.option("--density", type=float, default=None)
@table_option
@seed_option
@click.option("-o", "--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def params_gen(ctx, total, n, bound, max_degree, density, table_path, seed, out_path):
    config = ctx.obj["config"]
    table = _table(ctx, table_path)
    p, provenance = generate_params(
        table,
        total=config["paramgen"]["total"] if total is None else total,
        n=config["paramgen"]["n"] if n is None else n,
        max_degree=config["paramgen"]["max_degree"] if max_degree is None else max_degree,
        entry_bound=config["kex"]["entry_bound"] if bound is None else bound,
        density=config["paramgen"]["density"] if density is None else density,
        seed=seed,
        cap=config["matrix"]["order_cap"],
    )
    out = Path(out_path)
    out.write_bytes(encode_params(p))
    with open(f"{out}.json", "w") as f:
        json.dump(provenance, f, indent=2)
    click.echo(f"params: {out} dim={p.dim} n={p.n} bound={p.entry_bound}")
    click.echo(f"order lower bound: {provenance['order']['lower_bound']}")
    click.echo(f"digest: {params_digest(p).hex()}")


@cli.command("keygen")
@params_option
@table_option
@seed_option
@click.option("-o", "--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def keygen_command(ctx, params_path, table_path, seed, out_path):
    """Writes the private key to OUT (mode 0600) and the public key to OUT.pub."""
    p = _read_params(ctx, params_path, table_path)
    private, public = keygen(p, np.random.default_rng(seed))
    out = Path(out_path)
    out.write_bytes(encode_private_key(private))
    os.chmod(out, 0o600)
    Path(f"{out}.pub").write_bytes(canonical_encode(public.vec))
    click.echo(f"public key fingerprint: {key_fingerprint(public.vec).hex()}")


@cli.group()
def exchange():
    """Run both roles of an exchange."""


@exchange.command("local")
@params_option
@table_option
@seed_option
@click.pass_context
def exchange_local(ctx, params_path, table_path, seed):
    p = _read_params(ctx, params_path, table_path)
    timeout = ctx.obj["config"]["netkex"]["timeout"]
    alice_rng = np.random.default_rng(None if seed is None else [seed, 0])
    bob_rng = np.random.default_rng(None if seed is None else [seed, 1])
    a, b = LoopbackStream.pair(timeout)

    result = {}
    responder = threading.Thread(target=lambda: result.setdefault("bob", run_responder(b, bob_rng, params=p)))
    responder.start()
    alice = run_initiator(a, p, alice_rng)
    responder.join()
    bob = result["bob"]

    click.echo(f"alice: {alice.fingerprint.hex() if alice.fingerprint else '-'}")
    click.echo(f"bob:   {bob.fingerprint.hex() if bob.fingerprint else '-'}")
    if not (alice.completed and bob.completed):
        raise SemikexError(f"exchange failed: {alice.reason or bob.reason}")


@cli.command("serve")
@params_option
@table_option
@seed_option
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve_command(ctx, params_path, table_path, seed, host, port):
    cfg = ctx.obj["config"]["netkex"]
    p = _read_params(ctx, params_path, table_path)
    serve_forever(host or cfg["host"], port or cfg["port"], p, seed,
                  timeout=cfg["timeout"], max_frame=cfg["max_frame"])


@cli.command("connect")
@params_option
@table_option
@seed_option
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def connect_command(ctx, params_path, table_path, seed, host, port):
    cfg = ctx.obj["config"]["netkex"]
    p = _read_params(ctx, params_path, table_path)
    transcript = connect_once(host or cfg["host"], port or cfg["port"], p, seed,
                              timeout=cfg["timeout"], max_frame=cfg["max_frame"])
    if not transcript.completed:
        raise SemikexError(f"exchange failed: {transcript.reason}")
    click.echo(f"fingerprint: {transcript.fingerprint.hex()}")


@cli.group()
def attack():
    """Attack experiments against public keys."""


@attack.command("brute")
@params_option
@table_option
@click.option("--pk", "pk_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bound", type=int, required=True)
@click.option("--workers", type=int, default=None)
@emit_option
@click.pass_context
def attack_brute(ctx, params_path, table_path, pk_path, bound, workers, emit):
    cfg = ctx.obj["config"]["attacks"]
    p = _read_params(ctx, params_path, table_path)
    report = brute_force_attack(p, _read_pk(pk_path, p.table), bound, budget=cfg["budget"],
                                workers=workers or cfg["workers"], progress=_progress())
    _emit(report, emit)


@attack.command("random")
@params_option
@table_option
@click.option("--pk", "pk_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bound", type=int, required=True)
@click.option("--trials", type=int, required=True)
@seed_option
@emit_option
@click.pass_context
def attack_random(ctx, params_path, table_path, pk_path, bound, trials, seed, emit):
    p = _read_params(ctx, params_path, table_path)
    report = random_attack(p, _read_pk(pk_path, p.table), bound, trials, np.random.default_rng(seed),
                           progress=_progress())
    _emit(report, emit)


@attack.command("uniqueness")
@params_option
@table_option
@click.option("--mode", type=click.Choice(["n1", "general"]), required=True)
@click.option("--trials", type=int, default=500)
@click.option("--private", "private_entries", default=None, help="Fixed private circulant, comma separated.")
@click.option("--box", type=int, default=None, help="Enumerate [0, BOX]^n without the hypothesis filter.")
@click.option("--fixtures-dir", type=click.Path(file_okay=False), default=None,
              help="Directory receiving counterexample JSON fixtures [default: sr_vault/counterexamples].")
@seed_option
@emit_option
@click.pass_context
def attack_uniqueness(ctx, params_path, table_path, mode, trials, private_entries, box, fixtures_dir, seed, emit):
    p = _read_params(ctx, params_path, table_path)
    private = None
    if private_entries is not None:
        private = CirculantNat(tuple(_int_list(ctx, None, private_entries)))
    report = uniqueness_experiment(
        p, mode, trials, np.random.default_rng(seed), private=private, box=box,
        budget=ctx.obj["config"]["attacks"]["budget"], fixtures_dir=fixtures_dir, progress=_progress(),
        cap=ctx.obj["config"]["matrix"]["order_cap"],
    )
    _emit(report, emit)


@cli.group()
def bench():
    """Timing sweeps, written as CSV."""


@bench.command("setup")
@click.option("--sweep", callback=_int_list, default="16,32,64,128", help="Matrix sizes.")
@click.option("--n", "n", type=int, default=4)
@click.option("--max-degree", type=int, default=3)
@click.option("--runs", type=int, default=None)
@table_option
@seed_option
@click.pass_context
def bench_setup_command(ctx, sweep, n, max_degree, runs, table_path, seed):
    runs = runs or ctx.obj["config"]["bench"]["runs"]
    rows = bench_setup(_table(ctx, table_path), sweep, n, max_degree, runs=runs, seed=seed, progress=_progress())
    click.echo(render_csv(rows), nl=False)


@bench.command("act")
@click.option("--sweep", callback=_int_list, default="1,2,4,8,16", help="Vector lengths.")
@click.option("--dim", type=int, default=8)
@click.option("--bound", type=int, default=None)
@click.option("--runs", type=int, default=None)
@table_option
@seed_option
@click.pass_context
def bench_act_command(ctx, sweep, dim, bound, runs, table_path, seed):
    config = ctx.obj["config"]
    runs = runs or config["bench"]["runs"]
    bound = bound or config["kex"]["entry_bound"]
    rows = bench_act(_table(ctx, table_path), sweep, dim, bound, runs=runs, seed=seed, progress=_progress())
    click.echo(render_csv(rows), nl=False)


def dispatch(argv: list[str]) -> int:
    try:
        rv = cli.main(args=argv, prog_name="semikex", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        click.echo("Aborted", err=True)
        return 1
    except SemikexError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(dispatch(sys.argv[1:]))
