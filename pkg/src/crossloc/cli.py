"""Command-line interface: a thin client for the localization service.

By default commands run against an in-process instance of the FastAPI app
(no server required); pass --server to talk to a running instance instead.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import json
import sys
from typing import Optional

import click
import httpx


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


class DataError(click.ClickException):
    exit_code = 2


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise DataError(str(detail))
    return resp.json()


def _parse_noise(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise click.UsageError(f"--noise expects 'lat,lon,yaw_deg', got {text!r}")
    try:
        lat, lon, yaw = (float(p) for p in parts)
    except ValueError:
        raise click.UsageError(f"--noise expects three numbers, got {text!r}")
    return {"lateral": lat, "longitudinal": lon, "yaw_deg": yaw}


@click.group()
@click.option("--server", default=None, help="Base URL of a running service; in-process if omitted.")
@click.pass_context
def cli(ctx, server):
    """Cross-view localization toolkit."""
    ctx.obj = server


@cli.command()
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", required=True, help="Scene output directory.")
@click.option("--texture", default="blobs", show_default=True)
@click.option("--sat-size", type=int, default=256, show_default=True)
@click.option("--gamma", type=float, default=0.25, show_default=True)
@click.option("--rig", default="front", show_default=True, help="'front' or '4cam'.")
@click.option("--distractors", type=int, default=0, show_default=True)
@click.pass_obj
def synth(server, seed, out_dir, texture, sat_size, gamma, rig, distractors):
    """Render a deterministic synthetic scene to a directory."""
    with _client(server) as c:
        data = _post(
            c,
            "/synth",
            {
                "seed": seed,
                "out_dir": out_dir,
                "texture": texture,
                "sat_size": sat_size,
                "gamma": gamma,
                "rig": rig,
                "distractors": distractors,
            },
        )
    click.echo(json.dumps(data, indent=2))


@cli.command()
@click.option("--scene", "scene_dir", required=True, help="Scene directory to localize against.")
@click.option("--init", "init_pose", required=True, help="'lat,lon,yaw' (yaw in degrees, or with deg/rad suffix).")
@click.option("--trace", "trace_path", default=None, help="Optional JSONL optimizer trace.")
@click.option("--keypoints", "keypoints_path", default=None, help="Optional JSONL keypoint dump.")
@click.option("--iters", type=int, default=20, show_default=True, help="Iterations per level.")
@click.option("--levels", type=int, default=3, show_default=True)
@click.option("--fusion", default="max", show_default=True, help="'max' or 'mean'.")
@click.option("--no-oracle-masks", is_flag=True, default=False)
@click.pass_obj
def localize(server, scene_dir, init_pose, trace_path, keypoints_path, iters, levels, fusion, no_oracle_masks):
    """Refine an initial pose against a scene; prints the final pose JSON."""
    import math

    from .harness.pipeline import parse_pose

    try:
        pose = parse_pose(init_pose)
    except ValueError as e:
        raise click.UsageError(str(e))
    with _client(server) as c:
        data = _post(
            c,
            "/localize",
            {
                "scene_dir": scene_dir,
                "init": {
                    "lateral": pose.lateral,
                    "longitudinal": pose.longitudinal,
                    "yaw_deg": math.degrees(pose.yaw),
                },
                "config": {
                    "oracle_masks": not no_oracle_masks,
                    "lm": {"iters_per_level": iters, "levels": levels, "fusion_strategy": fusion},
                },
                "trace_path": trace_path,
                "keypoints_path": keypoints_path,
            },
        )
    click.echo(json.dumps(data, indent=2))


@cli.command("eval")
@click.option("--scenes", type=int, default=20, show_default=True)
@click.option("--trials-per-scene", type=int, default=10, show_default=True)
@click.option(
    "--noise",
    "noises",
    multiple=True,
    default=("5,5,15",),
    show_default=True,
    help="'lat,lon,yaw_deg' half-widths; repeat for a sweep (one CSV row each).",
)
@click.option("--report", "report_path", default=None, help="Write the CSV table here.")
@click.option("--texture", default="blobs", show_default=True)
@click.option("--rig", default="front", show_default=True)
@click.option("--distractors", type=int, default=0, show_default=True)
@click.option("--base-seed", type=int, default=0, show_default=True)
@click.option("--scene-seed-start", type=int, default=0, show_default=True)
@click.option("--iters", type=int, default=20, show_default=True)
@click.pass_obj
def eval_cmd(server, scenes, trials_per_scene, noises, report_path, texture, rig, distractors, base_seed, scene_seed_start, iters):
    """Monte Carlo evaluation over synthetic scenes; emits the metrics CSV."""
    with _client(server) as c:
        data = _post(
            c,
            "/eval",
            {
                "scenes": scenes,
                "trials_per_scene": trials_per_scene,
                "noises": [_parse_noise(n) for n in noises],
                "texture": texture,
                "rig": rig,
                "distractors": distractors,
                "base_seed": base_seed,
                "scene_seed_start": scene_seed_start,
                "config": {"lm": {"iters_per_level": iters}},
                "report_path": report_path,
            },
        )
    click.echo(data["csv"], nl=False)


@cli.command()
@click.option("--seeds", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_obj
def gradcheck(server, seeds, seed):
    """Run the finite-difference derivative suite; prints max relative errors."""
    with _client(server) as c:
        data = _post(c, "/gradcheck", {"seeds": seeds, "seed": seed})
    click.echo(json.dumps(data, indent=2))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the localization service."""
    import uvicorn

    uvicorn.run("crossloc.service.app:app", host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, obj=None)
        return 0
    except DataError as e:
        click.echo(f"error: {e.message}", err=True)
        return 2
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return 1
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 2
    except httpx.HTTPError as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except click.exceptions.Abort:
        return 1


if __name__ == "__main__":
    sys.exit(main())
