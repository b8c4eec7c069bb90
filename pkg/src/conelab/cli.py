"""Command-line client of the conelab service.

Subcommands mirror the service endpoints: net, warp, gap, distort, audit,
experiment, plot, plus serve to run the HTTP service.  By default requests
go to the in-process app; --server points the same commands at a remote
instance.

Exit codes: 0 success, 1 usage error, 2 resource cap exceeded, 3 internal
invariant violation.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

EXIT_USAGE = 1
EXIT_RESOURCE = 2
EXIT_INTERNAL = 3

_CODE_TO_EXIT = {"usage": EXIT_USAGE, "resource": EXIT_RESOURCE, "internal": EXIT_INTERNAL}


class ClientError(Exception):
    def __init__(self, exit_code, message):
        super().__init__(message)
        self.exit_code = exit_code


class ServiceClient:
    """HTTP-shaped access to the service, in-process or remote."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=3600.0)
        else:
            from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app, raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        body = response.json()
        if response.status_code != 200:
            code = body.get("code", "internal")
            message = body.get("message", str(body))
            raise ClientError(_CODE_TO_EXIT.get(code, EXIT_INTERNAL), message)
        return body

    def get(self, path: str) -> dict:
        response = self._client.get(path)
        return response.json()


def _read_config(path: str | None) -> str:
    if not path:
        return ""
    p = Path(path)
    if not p.exists():
        raise ClientError(EXIT_USAGE, f"config file not found: {path}")
    return p.read_text()


def _write(out_dir: str, name: str, content: str) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    target = d / name
    target.write_text(content)
    return target


def _common(ctx) -> ServiceClient:
    return ServiceClient(ctx.obj.get("server"))


def _payload(ctx, **extra) -> dict:
    payload = {"config_text": _read_config(ctx.obj.get("config"))}
    if ctx.obj.get("seed") is not None:
        payload["seed"] = ctx.obj["seed"]
    payload.update(extra)
    return payload


def _echo_json(data: dict, skip=("csv", "svg")) -> None:
    click.echo(json.dumps({k: v for k, v in data.items() if k not in skip}, indent=2))


@click.group()
@click.option("--server", default=None, help="Remote service URL; default runs in-process.")
@click.option("--config", "config_path", default=None, type=str, help="Experiment config file.")
@click.option("--seed", default=None, type=int, help="Override the config seed.")
@click.option("--out", "out_dir", default="results", show_default=True, help="Output directory.")
@click.pass_context
def cli(ctx, server, config_path, seed, out_dir):
    """Numerical laboratory for warped cones: nets, gaps, distortion."""
    ctx.ensure_object(dict)
    ctx.obj.update(server=server, config=config_path, seed=seed, out=out_dir)


@cli.command()
@click.option("--scale", "-t", default=8.0, show_default=True, help="Level t.")
@click.pass_context
def net(ctx, scale):
    """Build the level net and verify its covering radius."""
    body = _common(ctx).post("/net", _payload(ctx, scale=scale, include_csv=True))
    path = _write(ctx.obj["out"], f"net_t{scale:g}.csv", body.pop("csv"))
    body["csv_path"] = str(path)
    _echo_json(body)


@cli.command()
@click.option("--scale", "-t", default=8.0, show_default=True, help="Level t.")
@click.option("--edges/--no-edges", default=True, show_default=True,
              help="Write the edge list CSV.")
@click.pass_context
def warp(ctx, scale, edges):
    """Build the warped level graph."""
    body = _common(ctx).post("/warp", _payload(ctx, scale=scale, include_csv=edges))
    csv = body.pop("csv")
    if edges:
        path = _write(ctx.obj["out"], f"warp_t{scale:g}.csv", csv)
        body["csv_path"] = str(path)
    _echo_json(body)


@cli.command()
@click.option("--grid-size", "-n", default=None, type=int, help="Grid resolution.")
@click.pass_context
def gap(ctx, grid_size):
    """Certify the spectral gap of the averaging operator."""
    body = _common(ctx).post("/gap", _payload(ctx, grid_size=grid_size))
    _echo_json(body)


@cli.command()
@click.option("--scale", "-t", default=8.0, show_default=True, help="Level t.")
@click.pass_context
def distort(ctx, scale):
    """Distortion sandwich at one level: spectral floor vs Bourgain embedding."""
    body = _common(ctx).post("/distort", _payload(ctx, scale=scale))
    _echo_json(body)


@cli.command()
@click.option("--scale", "-t", default=8.0, show_default=True, help="Level t.")
@click.option("--embedding", default="bourgain", show_default=True,
              type=click.Choice(["bourgain", "random"]))
@click.option("-p", "p_exp", default=2.0, show_default=True, help="Norm exponent.")
@click.pass_context
def audit(ctx, scale, embedding, p_exp):
    """Replay the lower-bound inequalities on a concrete embedding."""
    body = _common(ctx).post(
        "/audit", _payload(ctx, scale=scale, embedding=embedding, p=p_exp)
    )
    _echo_json(body)
    if not (body["passed_gap"] and body["passed_double"]):
        raise ClientError(EXIT_INTERNAL, "audit inequalities failed: " + body["note"])


@cli.command()
@click.argument("experiment_id", type=click.Choice(["E1", "E2", "E3", "E4", "E5"]))
@click.pass_context
def experiment(ctx, experiment_id):
    """Run one canonical experiment and write its CSV."""
    body = _common(ctx).post(
        "/experiment", _payload(ctx, experiment_id=experiment_id)
    )
    path = _write(ctx.obj["out"], f"{experiment_id}.csv", body.pop("csv"))
    body["csv_path"] = str(path)
    _echo_json(body)
    if body["truncated"]:
        raise ClientError(EXIT_RESOURCE, "experiment truncated by a resource cap")


@cli.command()
@click.option("--table", "table_path", required=True, type=str, help="Result CSV path.")
@click.option("--x", "x_col", required=True, help="X column.")
@click.option("--y", "y_cols", required=True, help="Comma-separated y columns.")
@click.option("--logx/--no-logx", default=False, show_default=True)
@click.option("--logy/--no-logy", default=False, show_default=True)
@click.option("--title", default="", help="Plot title.")
@click.pass_context
def plot(ctx, table_path, x_col, y_cols, logx, logy, title):
    """Render an SVG line plot from a result CSV."""
    p = Path(table_path)
    if not p.exists():
        raise ClientError(EXIT_USAGE, f"table not found: {table_path}")
    body = _common(ctx).post(
        "/plot",
        {
            "csv": p.read_text(),
            "x": x_col,
            "y": [c for c in y_cols.split(",") if c],
            "logx": logx,
            "logy": logy,
            "title": title or p.stem,
        },
    )
    out = _write(ctx.obj["out"], p.stem + ".svg", body["svg"])
    click.echo(json.dumps({"svg_path": str(out)}))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8410, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except ClientError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - map everything else to exit 3
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
