"""Command-line front end: probe, heatmap, purify, dataset, and grid commands.

All commands read one flat `key = value` config file, validate it completely
before touching any data, and write into a locked output directory with a
fixed layout (reports/, plots/, checkpoints/, logs/).
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import shlex
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .cloud import DecoratedPointCloud, read_xyz, write_xyz
from .metrics import (
    HeatmapTable,
    ProbeFunction,
    SpectrumReport,
    accumulate_heatmap,
    character_projection,
    equivariance_error,
)
from .o3 import IrrepLabel
from .protocol import RemoteProbeFunction, connect_subprocess, connect_tcp
from .purify import (
    PurifiedReadout,
    ReadoutSample,
    assemble,
    contaminated_fixture,
    evaluate_tradeoff,
    readout_to_json,
    solve,
    tradeoff_to_csv,
)
from .quadrature import (
    GridCapacityError,
    O3Grid,
    build_so3_grid,
    extend_to_o3,
    grid_to_json,
    orthogonality_residual,
)
from .serialize import dumps_decimal, format_float
from .targets import (
    ConformerSpec,
    chbrclf_geometry,
    constant_vector_probe,
    oracle,
    pseudoscalar_Q,
    rattled_conformers,
)
from .toy import ToyNet

__all__ = ["main", "parse_config", "ConfigError"]


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


# key -> (converter, default); defaults of None mean "required by the commands
# that consume the key"
_KEYS: dict[str, tuple[Callable, object]] = {
    "output_dir": (str, None),
    "seed": (int, 0),
    "structures": (str, "dataset"),
    "grid_band_limit": (int, 4),
    "grid_scheme": (str, "lebedev_trapezoid"),
    "lambda_max": (int, 4),
    "model": (str, "target:Q"),
    "claims": (str, ""),
    "probe_subset": (int, 8),
    "dataset_count": (int, 20),
    "dataset_rattle_sigma": (float, 0.05),
    "dataset_random_orientation": (_parse_bool, True),
    "checkpoints": (str, ""),
    "gamma_ladder": (str, "0,0.1,1,10,100"),
    "purify_head": (str, ""),
    "purify_ridge": (float, 0.0),
}


def parse_config(text: str) -> dict:
    """Strict flat-file parsing: `key = value` lines, `#` comments.

    Every key must be known and every value must convert; nothing is computed
    before the whole file validates.
    """
    values = {k: default for k, (_, default) in _KEYS.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        conv, _ = _KEYS[key]
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")
    if values["output_dir"] is None:
        raise ConfigError("missing required key 'output_dir'")
    if values["grid_band_limit"] < 0 or values["lambda_max"] < 0:
        raise ConfigError("grid_band_limit and lambda_max must be >= 0")
    _parse_claims(values["claims"])  # validate eagerly
    _parse_gammas(values["gamma_ladder"])
    return values


def _parse_claims(spec: str) -> dict[str, IrrepLabel]:
    claims = {}
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        try:
            name, lam_sigma = part.split(":")
            lam, sigma = lam_sigma.split(",")
            claims[name.strip()] = IrrepLabel(int(lam), int(sigma))
        except ValueError as exc:
            raise ConfigError(
                f"bad claim {part!r} (expected name:lambda,sigma): {exc}"
            )
    return claims


def _parse_gammas(spec: str) -> list[float]:
    try:
        gammas = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad gamma_ladder: {exc}")
    if not gammas or any(g < 0 for g in gammas):
        raise ConfigError("gamma_ladder needs non-negative values")
    return gammas


# -- output directory ----------------------------------------------------------


class OutputDir:
    """Locked run directory with the documented reports/plots/checkpoints/logs layout."""

    def __init__(self, path: str):
        self.path = path
        os.makedirs(path, exist_ok=True)
        self.lock_path = os.path.join(path, ".lock")
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"output directory {path} is in use (stale lock? remove {self.lock_path})"
            )
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        for sub in ("reports", "plots", "checkpoints", "logs"):
            os.makedirs(os.path.join(path, sub), exist_ok=True)

    def file(self, sub: str, name: str) -> str:
        return os.path.join(self.path, sub, name)

    def release(self) -> None:
        try:
            os.remove(self.lock_path)
        except FileNotFoundError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.release()


def _setup_logging(out: OutputDir) -> logging.Logger:
    logger = logging.getLogger("equicheck")
    logger.setLevel(logging.INFO)
    logger.handlers.clear()
    fh = logging.FileHandler(out.file("logs", "run.log"))
    fh.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    logger.addHandler(fh)
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(sh)
    return logger


# -- model sources -------------------------------------------------------------


@dataclass
class ModelHandle:
    probe: object  # callable cloud -> dict of flat arrays
    declared_irreps: dict[str, IrrepLabel]
    net: ToyNet | None = None
    epoch: object = None
    close: Callable | None = None

    def tap_names(self, x: DecoratedPointCloud) -> list[str]:
        return list(self.probe(x).keys())


def build_model(source: str, claims: dict[str, IrrepLabel]) -> ModelHandle:
    """Resolve a model source string into a probe-able handle.

    Sources: toy:<checkpoint.json>, tcp:<host>:<port>, stdio:<command>,
    target:Q, oracle:<lambda>,<sigma>[,<order>], fixture:constant_vector:x,y,z.
    """
    kind, _, rest = source.partition(":")
    if kind == "toy":
        net, epoch = ToyNet.load(rest)
        probe = net.as_probe()
        declared = dict(probe.declared_irreps)
        declared.update(claims)
        return ModelHandle(probe, declared, net=net, epoch=epoch)
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        try:
            remote = connect_tcp(host, int(port), claims)
        except OSError as exc:
            raise RuntimeError(
                f"cannot reach probe endpoint {rest}: {exc} "
                "(is the server running? check host:port)"
            )
        return ModelHandle(remote, dict(claims), close=remote.close)
    if kind == "stdio":
        remote = connect_subprocess(shlex.split(rest), claims)
        return ModelHandle(remote, dict(claims), close=remote.close)
    if kind == "target" and rest == "Q":
        probe = ProbeFunction(
            lambda x: {"Q": np.array([pseudoscalar_Q(x)])}, {"Q": IrrepLabel(0, -1)}
        )
        return ModelHandle(probe, {"Q": IrrepLabel(0, -1), **claims})
    if kind == "oracle":
        parts = rest.split(",")
        if len(parts) not in (2, 3):
            raise ConfigError(f"oracle source needs lambda,sigma[,order]; got {rest!r}")
        label = IrrepLabel(int(parts[0]), int(parts[1]))
        order = int(parts[2]) if len(parts) == 3 else 1
        probe = oracle(label, order)
        return ModelHandle(probe, {"value": label, **claims})
    if kind == "fixture" and rest.startswith("constant_vector:"):
        c = [float(v) for v in rest.split(":", 1)[1].split(",")]
        probe = constant_vector_probe(c)
        return ModelHandle(probe, {"value": IrrepLabel(1, +1), **claims})
    raise ConfigError(f"unknown model source {source!r}")


def _load_structures(cfg: dict) -> list[DecoratedPointCloud]:
    if cfg["structures"] == "dataset":
        spec = ConformerSpec(
            chbrclf_geometry(),
            rattle_sigma=cfg["dataset_rattle_sigma"],
            count=cfg["dataset_count"],
            seed=cfg["seed"],
            random_orientation=cfg["dataset_random_orientation"],
        )
        return [c for c, _ in rattled_conformers(spec)]
    return read_xyz(cfg["structures"])


def _build_grid(cfg: dict) -> O3Grid:
    try:
        return extend_to_o3(build_so3_grid(cfg["grid_band_limit"], cfg["grid_scheme"]))
    except GridCapacityError as exc:
        raise RuntimeError(f"{exc}; lower grid_band_limit or lambda_max") from exc


# -- plotting (all static files, Agg backend) ---------------------------------


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_probe(path: str, a_rows: list[dict], b_agg: dict[str, dict[IrrepLabel, float]]):
    plt = _plt()
    outputs = sorted({r["output"] for r in a_rows}) or ["(none)"]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for out_name in outputs:
        vals = [r["A"] for r in a_rows if r["output"] == out_name]
        if vals:
            axes[0].hist(vals, bins=min(20, max(3, len(vals) // 2)), alpha=0.6,
                         label=out_name)
    axes[0].set_xlabel("equivariance error")
    axes[0].set_ylabel("count")
    axes[0].set_title("per-structure equivariance error")
    if a_rows:
        axes[0].legend()
    labels = []
    heights = []
    names = []
    for out_name, proj in sorted(b_agg.items()):
        for a, v in sorted(proj.items()):
            labels.append(f"{out_name}\n({a.lam},{'+' if a.sigma > 0 else '-'})")
            heights.append(v)
            names.append(out_name)
    axes[1].bar(range(len(heights)), heights)
    axes[1].set_xticks(range(len(labels)))
    axes[1].set_xticklabels(labels, fontsize=6, rotation=90)
    axes[1].set_ylabel("mean normalized projection")
    axes[1].set_title("irrep content")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_heatmap(path: str, table: HeatmapTable):
    plt = _plt()
    layers = table.layers()
    epochs = table.epochs()
    labels = table.labels()
    fig, axes = plt.subplots(1, max(len(layers), 1),
                             figsize=(3.2 * max(len(layers), 1), 4), squeeze=False)
    # "U" sits to the left of the log-scaled epoch axis
    positions = [0.5 if e == HeatmapTable.UNTRAINED else float(e) + 1.0 for e in epochs]
    for ax, layer in zip(axes[0], layers):
        data = np.array(
            [[table.columns.get((layer, e), {}).get(a, 0.0) for e in epochs]
             for a in labels]
        )
        ax.imshow(data, aspect="auto", origin="upper", cmap="viridis",
                  vmin=0.0, vmax=1.0)
        ax.set_xticks(range(len(epochs)))
        ax.set_xticklabels([str(e) for e in epochs], fontsize=6)
        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(
            [f"({a.lam},{'+' if a.sigma > 0 else '-'})" for a in labels], fontsize=6
        )
        ax.set_title(layer, fontsize=8)
        ax.set_xlabel("epoch (log spacing)" if len(set(positions)) > 1 else "epoch")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_tradeoff(path: str, rows: list[dict]):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([r["equivariance_error"] for r in rows], [r["rmse"] for r in rows], "o-")
    for r in rows:
        ax.annotate(f"g={r['gamma']:g}", (r["equivariance_error"], r["rmse"]),
                    fontsize=7, textcoords="offset points", xytext=(4, 4))
    ax.set_xscale("log")
    ax.set_xlabel("held-out equivariance error")
    ax.set_ylabel("held-out RMSE")
    ax.set_title("accuracy vs equivariance tradeoff")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -- commands ------------------------------------------------------------------


def cmd_probe(cfg: dict, out: OutputDir, log: logging.Logger) -> None:
    claims = _parse_claims(cfg["claims"])
    structures = _load_structures(cfg)
    grid = _build_grid(cfg)
    handle = build_model(cfg["model"], claims)
    try:
        if cfg["lambda_max"] > grid.band_limit:
            raise RuntimeError(
                f"lambda_max {cfg['lambda_max']} exceeds grid band limit "
                f"{grid.band_limit}; raise grid_band_limit"
            )
        taps = handle.tap_names(structures[0])
        a_claims = {
            name: label for name, label in handle.declared_irreps.items() if name in taps
        }
        log.info("probing %d structures, taps %s", len(structures), taps)

        a_rows: list[dict] = []
        b_rows: list[dict] = []
        reports_by_tap: dict[str, list[SpectrumReport]] = {t: [] for t in taps}
        for idx, x in enumerate(structures):
            for name, label in a_claims.items():
                a_rows.append(
                    {"structure": idx, "output": name, "irrep": label,
                     "A": equivariance_error(handle.probe, name, label, x, grid)}
                )
            for tap in taps:
                rep = character_projection(handle.probe, tap, x, grid, cfg["lambda_max"])
                reports_by_tap[tap].append(rep)
                for a, v in sorted(rep.normalized.items()):
                    b_rows.append(
                        {"structure": idx, "output": tap, "irrep": a, "B": v}
                    )

        lines = ["structure,output,metric,lambda,sigma,value"]
        for r in a_rows:
            lines.append(
                f"{r['structure']},{r['output']},A,{r['irrep'].lam},"
                f"{r['irrep'].sigma},{format_float(r['A'])}"
            )
        for r in b_rows:
            lines.append(
                f"{r['structure']},{r['output']},B,{r['irrep'].lam},"
                f"{r['irrep'].sigma},{format_float(r['B'])}"
            )
        medians: dict[str, float] = {}
        for name in a_claims:
            vals = [r["A"] for r in a_rows if r["output"] == name]
            medians[name] = float(np.median(vals))
            label = a_claims[name]
            lines.append(
                f"median,{name},A,{label.lam},{label.sigma},{format_float(medians[name])}"
            )
        b_agg: dict[str, dict[IrrepLabel, float]] = {}
        for tap, reps in reports_by_tap.items():
            keys = reps[0].projections.keys()
            b_agg[tap] = {
                a: float(np.mean([r.normalized[a] for r in reps])) for a in keys
            }
            for a, v in sorted(b_agg[tap].items()):
                lines.append(f"mean,{tap},B,{a.lam},{a.sigma},{format_float(v)}")
        csv_text = "\n".join(lines) + "\n"
        with open(out.file("reports", "probe.csv"), "w") as f:
            f.write(csv_text)

        payload = {
            "model": cfg["model"],
            "n_structures": len(structures),
            "lambda_max": cfg["lambda_max"],
            "medians_A": medians,
            "aggregate_B": {
                tap: [{"lambda": a.lam, "sigma": a.sigma, "value": v}
                      for a, v in sorted(agg.items())]
                for tap, agg in b_agg.items()
            },
            "spectra": {
                tap: [r.to_json_dict() for r in reps]
                for tap, reps in reports_by_tap.items()
            },
        }
        with open(out.file("reports", "probe.json"), "w") as f:
            f.write(dumps_decimal(payload))
        _plot_probe(out.file("plots", "probe.png"), a_rows, b_agg)
        for name, med in medians.items():
            log.info("median A[%s] = %s", name, format_float(med))
    finally:
        if handle.close is not None:
            handle.close()


def cmd_heatmap(cfg: dict, out: OutputDir, log: logging.Logger) -> None:
    paths = sorted(glob.glob(cfg["checkpoints"]))
    if not paths:
        raise RuntimeError(f"no checkpoints match {cfg['checkpoints']!r}")
    structures = _load_structures(cfg)[: cfg["probe_subset"]]
    grid = _build_grid(cfg)
    table = HeatmapTable(cfg["lambda_max"])
    reference_config = None
    for path in paths:
        net, epoch = ToyNet.load(path)
        with open(path) as f:
            manifest_config = json.load(f)["config"]
        if reference_config is None:
            reference_config = manifest_config
        elif manifest_config != reference_config:
            raise RuntimeError(
                f"checkpoint {path} has a different architecture than {paths[0]}"
            )
        probe = net.as_probe()
        column = HeatmapTable.UNTRAINED if epoch is None else epoch
        taps = list(probe(structures[0]).keys())
        log.info("checkpoint %s -> column %r", path, column)
        for tap in taps:
            reports = [
                character_projection(probe, tap, x, grid, cfg["lambda_max"])
                for x in structures
            ]
            accumulate_heatmap(table, column, tap, reports)
    with open(out.file("reports", "heatmap.csv"), "w") as f:
        f.write(table.to_csv())
    with open(out.file("reports", "heatmap.json"), "w") as f:
        f.write(dumps_decimal(table.to_json_dict()))
    _plot_heatmap(out.file("plots", "heatmap.png"), table)
    log.info("heatmap columns: %s", table.epochs())


def cmd_purify(cfg: dict, out: OutputDir, log: logging.Logger) -> None:
    gammas = _parse_gammas(cfg["gamma_ladder"])
    grid = _build_grid(cfg)
    rng = np.random.default_rng([cfg["seed"], 97])

    if cfg["model"] == "fixture:contaminated":
        out_irrep, blocks = IrrepLabel(1, +1), 1
        train_samples, heldout = contaminated_fixture(rng, grid)
    else:
        handle = build_model(cfg["model"], {})
        if handle.net is None:
            raise RuntimeError(
                "purify needs a toy checkpoint (or fixture:contaminated); "
                f"{cfg['model']!r} does not expose a last-layer tap and readout"
            )
        net = handle.net
        head = cfg["purify_head"] or sorted(net.config.heads)[0]
        if head not in net.config.heads:
            raise RuntimeError(f"model has no head {head!r}; has {sorted(net.config.heads)}")
        spec = net.config.heads[head]
        out_irrep, blocks = spec.irrep, spec.blocks
        tap = f"llf:{head}"
        structures = _load_structures(cfg)
        samples = []
        from .cloud import act

        for x in structures:
            feats = np.stack([net.forward(act(g, x))[tap] for g in grid.nodes])
            samples.append(ReadoutSample(feats, net.forward(x)[head]))
        n_train = max(1, int(0.8 * len(samples)))
        train_samples, heldout = samples[:n_train], samples[n_train:]
        if not heldout:
            raise RuntimeError("need at least 2 structures to hold out a validation split")

    acc = assemble(train_samples, grid, out_irrep, blocks)
    readouts = [solve(acc, g, cfg["purify_ridge"]) for g in gammas]
    rows = evaluate_tradeoff(readouts, heldout, grid, out_irrep, blocks)
    with open(out.file("reports", "purify_tradeoff.csv"), "w") as f:
        f.write(tradeoff_to_csv(rows))
    _plot_tradeoff(out.file("plots", "purify_tradeoff.png"), rows)

    # chosen gamma: best equivariance among ladder entries costing <= 1% RMSE
    base_rmse = rows[0]["rmse"]
    eligible = [
        (r, ro) for r, ro in zip(rows, readouts) if r["rmse"] <= 1.01 * base_rmse
    ]
    chosen_row, chosen = min(eligible, key=lambda p: p[0]["equivariance_error"])
    with open(out.file("checkpoints", "purified_readout.json"), "w") as f:
        f.write(readout_to_json(chosen))
    log.info(
        "chosen gamma %s: rmse %s, equivariance error %s",
        format_float(chosen.gamma),
        format_float(chosen_row["rmse"]),
        format_float(chosen_row["equivariance_error"]),
    )


def cmd_dataset(cfg: dict, out: OutputDir, log: logging.Logger) -> None:
    spec = ConformerSpec(
        chbrclf_geometry(),
        rattle_sigma=cfg["dataset_rattle_sigma"],
        count=cfg["dataset_count"],
        seed=cfg["seed"],
        random_orientation=cfg["dataset_random_orientation"],
    )
    clouds = [c for c, _ in rattled_conformers(spec)]
    path = out.file("reports", "dataset.xyz")
    write_xyz(clouds, path)
    log.info("wrote %d conformers to %s", len(clouds), path)


def cmd_grid(cfg: dict, out: OutputDir, log: logging.Logger) -> None:
    grid = _build_grid(cfg)
    with open(out.file("reports", "grid.json"), "w") as f:
        f.write(grid_to_json(grid))
    lines = [
        f"scheme {cfg['grid_scheme']}",
        f"band_limit {grid.band_limit}",
        f"nodes {len(grid)}",
        f"weight_sum {format_float(float(np.sum(grid.weights)))}",
        "lambda_max residual",
    ]
    for lam in range(grid.band_limit + 1):
        res = orthogonality_residual(grid, lam)
        lines.append(f"{lam} {format_float(res)}")
        log.info("orthogonality residual up to lambda=%d: %s", lam, format_float(res))
    with open(out.file("reports", "grid_certification.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


_COMMANDS = {
    "probe": cmd_probe,
    "heatmap": cmd_heatmap,
    "purify": cmd_purify,
    "dataset": cmd_dataset,
    "grid": cmd_grid,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="equicheck",
        description="Symmetry diagnostics for point-cloud models: equivariance "
        "error, irrep spectra, training heatmaps, and readout purification.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("config", help="path to a flat key = value config file")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as f:
            cfg = parse_config(f.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        with OutputDir(cfg["output_dir"]) as out:
            log = _setup_logging(out)
            log.info("equicheck %s: %s (%s)", __version__, args.command, args.config)
            _COMMANDS[args.command](cfg, out, log)
        return 0
    except (RuntimeError, ConfigError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
