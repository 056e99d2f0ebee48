"""Thinned posterior draws and their on-disk chain-file format.

A chain file is plain text::

    # hrhmm chain v1
    # meta {...json: config, seed, hyperparameters, parameter layout...}
    draw,alpha[1B:0],...,elite
    0,-3.51,...,<hex of packed elite bits>

Floats are written with ``repr`` so a file round-trips exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import NU_LABELS, Hyperparams, ModelState

MAGIC = "# hrhmm chain v1"


@dataclass
class ChainStore:
    alpha: np.ndarray           # (draws, groups, states)
    beta: np.ndarray            # (draws, parks)
    gamma: np.ndarray           # (draws, groups, n_basis)
    nu: np.ndarray              # (draws, groups, 4)
    elite: np.ndarray           # (draws, rows) uint8
    layout: dict
    seed: int = 0
    chain: int = 0
    config: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    nu_player: np.ndarray | None = None   # (draws, players, 4)
    omega: np.ndarray | None = None       # (draws, groups, 4)
    tags: dict = field(default_factory=dict)  # free-form provenance, e.g. the run's config fingerprint

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    def draw(self, i: int) -> ModelState:
        return ModelState(
            self.alpha[i].copy(), self.beta[i].copy(), self.gamma[i].copy(), self.nu[i].copy(),
            self.elite[i].astype(np.int8),
            None if self.nu_player is None else self.nu_player[i].copy(),
            None if self.omega is None else self.omega[i].copy(),
        )

    @property
    def draws(self) -> list[ModelState]:
        return [self.draw(i) for i in range(self.n_draws)]

    def hyperparams(self) -> Hyperparams:
        h = dict(self.hyper)
        h["interior_knots"] = tuple(h.get("interior_knots", ()))
        return Hyperparams(**h)

    def parameters(self) -> tuple[list[str], np.ndarray]:
        """Scalar parameter names and a (draws, n_params) matrix, in file column order."""
        groups = self.layout["groups"]
        parks = self.layout["parks"]
        names: list[str] = []
        cols: list[np.ndarray] = []
        D = self.n_draws
        for k, g in enumerate(groups):
            for e in range(self.alpha.shape[2]):
                names.append(f"alpha[{g}:{e}]")
                cols.append(self.alpha[:, k, e])
        for b, p in enumerate(parks):
            names.append(f"beta[{p}]")
            cols.append(self.beta[:, b])
        for k, g in enumerate(groups):
            for l in range(self.gamma.shape[2]):
                names.append(f"gamma[{g}:{l}]")
                cols.append(self.gamma[:, k, l])
        for k, g in enumerate(groups):
            for j, lab in enumerate(NU_LABELS):
                names.append(f"nu[{g}:{lab}]")
                cols.append(self.nu[:, k, j])
        if self.omega is not None:
            for k, g in enumerate(groups):
                for j, lab in enumerate(NU_LABELS):
                    names.append(f"omega[{g}:{lab}]")
                    cols.append(self.omega[:, k, j])
        if self.nu_player is not None:
            for i, pid in enumerate(self.layout["players"]):
                for j, lab in enumerate(NU_LABELS):
                    names.append(f"nu_player[{pid}:{lab}]")
                    cols.append(self.nu_player[:, i, j])
        mat = np.column_stack(cols) if cols else np.zeros((D, 0))
        return names, mat.reshape(D, len(names))

    def meta(self) -> dict:
        return {
            "chain": self.chain,
            "seed": self.seed,
            "config": self.config,
            "hyper": self.hyper,
            "layout": self.layout,
            "shapes": {
                "alpha": list(self.alpha.shape[1:]),
                "beta": list(self.beta.shape[1:]),
                "gamma": list(self.gamma.shape[1:]),
                "nu": list(self.nu.shape[1:]),
                "elite": list(self.elite.shape[1:]),
                "nu_player": None if self.nu_player is None else list(self.nu_player.shape[1:]),
                "omega": None if self.omega is None else list(self.omega.shape[1:]),
            },
            "acceptance": {k: np.asarray(v).tolist() for k, v in self.acceptance.items()},
            "scales": {k: np.asarray(v).tolist() for k, v in self.scales.items()},
            "tags": self.tags,
        }


def dumps_chain(store: ChainStore) -> str:
    names, mat = store.parameters()
    buf = io.StringIO()
    buf.write(MAGIC + "\n")
    buf.write("# meta " + json.dumps(store.meta(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw", *names, "elite"])
    n_rows = store.elite.shape[1]
    for i in range(store.n_draws):
        bits = np.packbits(store.elite[i].astype(np.uint8)).tobytes().hex() if n_rows else ""
        w.writerow([i, *(repr(float(v)) for v in mat[i]), bits])
    return buf.getvalue()


def write_chain(store: ChainStore, path: str | Path) -> None:
    Path(path).write_text(dumps_chain(store))


def read_chain(path: str | Path) -> ChainStore:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValueError(f"{path}: not a chain file")
    if not lines[1].startswith("# meta "):
        raise ValueError(f"{path}: missing meta header")
    meta = json.loads(lines[1][len("# meta "):])
    reader = csv.reader(lines[2:])
    header = next(reader)
    rows = list(reader)
    D = len(rows)
    shapes = meta["shapes"]
    n_par = len(header) - 2
    mat = np.array([[float(v) for v in r[1:-1]] for r in rows]).reshape(D, n_par)
    n_rows = shapes["elite"][0]
    elite = np.zeros((D, n_rows), dtype=np.uint8)
    for i, r in enumerate(rows):
        if n_rows:
            elite[i] = np.unpackbits(np.frombuffer(bytes.fromhex(r[-1]), dtype=np.uint8))[:n_rows]

    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = mat[:, pos:pos + size].reshape((D, *shape))
        pos += size
        return out.copy()

    alpha = take(shapes["alpha"])
    beta = take(shapes["beta"])
    gamma = take(shapes["gamma"])
    nu = take(shapes["nu"])
    omega = take(shapes["omega"]) if shapes["omega"] is not None else None
    nu_player = take(shapes["nu_player"]) if shapes["nu_player"] is not None else None
    return ChainStore(
        alpha=alpha, beta=beta, gamma=gamma, nu=nu, elite=elite, layout=meta["layout"],
        seed=meta["seed"], chain=meta["chain"], config=meta["config"], hyper=meta["hyper"],
        acceptance={k: np.asarray(v, dtype=float) for k, v in meta["acceptance"].items()},
        scales={k: np.asarray(v, dtype=float) for k, v in meta["scales"].items()},
        nu_player=nu_player, omega=omega, tags=meta.get("tags", {}),
    )


def pooled(chains: list[ChainStore]) -> ChainStore:
    """Concatenate the draws of several chains (metadata from the first)."""
    if not chains:
        raise ValueError("no chains to pool")
    c0 = chains[0]

    def cat(attr):
        parts = [getattr(c, attr) for c in chains]
        return None if parts[0] is None else np.concatenate(parts, axis=0)

    return ChainStore(
        alpha=cat("alpha"), beta=cat("beta"), gamma=cat("gamma"), nu=cat("nu"), elite=cat("elite"),
        layout=c0.layout, seed=c0.seed, chain=-1, config=c0.config, hyper=c0.hyper,
        nu_player=cat("nu_player"), omega=cat("omega"), tags=c0.tags,
    )
