"""Bundled deterministic simulation processes.

Three small, analytically checkable models give the stack verifiable
end-to-end content:

  heat-diffusion   explicit 5-point stencil with insulated boundaries
  noise-map        point-source attenuation with energetic summation
  comfort-index    combines both sub-models, executed through a platform

All three are pure functions of their inputs; identical inputs yield
byte-identical outputs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .protocol import (
    InputDescription,
    OutputDescription,
    ProcessDescription,
    ProcessSummary,
)

DB_FLOOR = -120.0  # JSON has no -Infinity; silence maps to this floor
NOISE_REFERENCE_DISTANCE = 1.0  # metres


# ---------------------------------------------------------------------------
# Grids


def grid_dict(width: int, height: int, values, cell_size: float = 1.0, origin=(0.0, 0.0)) -> dict:
    return {
        "width": width,
        "height": height,
        "cellSize": cell_size,
        "origin": [origin[0], origin[1]],
        "values": list(values),
    }


def grid_values(grid: dict) -> np.ndarray:
    return np.asarray(grid["values"], dtype=np.float64).reshape(grid["height"], grid["width"])


def cell_centers(grid: dict) -> tuple[np.ndarray, np.ndarray]:
    """x/y coordinates of each cell center, row-major, row 0 nearest the origin."""
    ox, oy = grid["origin"]
    cs = grid["cellSize"]
    xs = ox + (np.arange(grid["width"]) + 0.5) * cs
    ys = oy + (np.arange(grid["height"]) + 0.5) * cs
    return np.meshgrid(xs, ys)


# ---------------------------------------------------------------------------
# Heat diffusion


def heat_diffusion_step(values: np.ndarray, alpha: float) -> np.ndarray:
    """One explicit step: v' = v + alpha * (sum of in-grid neighbors - k*v),
    k being the number of in-grid neighbors. Insulated boundaries, so total
    heat is conserved."""
    h, w = values.shape
    total = np.zeros_like(values)
    total[1:, :] = values[:-1, :]  # north neighbor
    total[:-1, :] = total[:-1, :] + values[1:, :]  # south
    total[:, 1:] = total[:, 1:] + values[:, :-1]  # west
    total[:, :-1] = total[:, :-1] + values[:, 1:]  # east
    k = np.full_like(values, 4.0)
    k[0, :] -= 1.0
    k[-1, :] -= 1.0
    k[:, 0] -= 1.0
    k[:, -1] -= 1.0
    return values + alpha * (total - k * values)


def heat_diffusion(grid: dict, alpha: float, iterations: int, ctx=None) -> dict:
    """Iterate the stencil; iterations = 0 is the identity."""
    values = grid_values(grid)
    for _ in range(iterations):
        if ctx is not None:
            ctx.check_cancelled()
        values = heat_diffusion_step(values, alpha)
    return grid_dict(
        grid["width"], grid["height"], values.reshape(-1).tolist(),
        cell_size=grid["cellSize"], origin=tuple(grid["origin"]),
    )


# ---------------------------------------------------------------------------
# Noise propagation


def noise_level_at(distance: float, level: float) -> float:
    """Geometric attenuation from the reference distance, clamped there."""
    d = max(distance, NOISE_REFERENCE_DISTANCE)
    return level - 20.0 * math.log10(d / NOISE_REFERENCE_DISTANCE)


def noise_map(sources: list[tuple[float, float, float]], width: int, height: int,
              cell_size: float = 1.0, origin=(0.0, 0.0), ctx=None) -> dict:
    """dB level per receiver cell: energetic sum of all source contributions,
    floored at DB_FLOOR."""
    receiver = grid_dict(width, height, [0.0] * (width * height), cell_size, origin)
    gx, gy = cell_centers(receiver)
    energy = np.zeros((height, width), dtype=np.float64)
    for sx, sy, level in sources:
        if ctx is not None:
            ctx.check_cancelled()
        dist = np.hypot(gx - sx, gy - sy)
        dist = np.maximum(dist, NOISE_REFERENCE_DISTANCE)
        contribution = level - 20.0 * np.log10(dist / NOISE_REFERENCE_DISTANCE)
        energy = energy + np.power(10.0, contribution / 10.0)
    with np.errstate(divide="ignore"):
        levels = 10.0 * np.log10(energy)
    levels = np.maximum(levels, DB_FLOOR)
    return grid_dict(width, height, levels.reshape(-1).tolist(), cell_size, origin)


def sources_from_points(points: list[dict]) -> list[tuple[float, float, float]]:
    sources = []
    for point in points:
        attrs = point.get("attributes") or {}
        if "level" not in attrs:
            raise ValueError("noise source point missing attributes.level")
        sources.append((float(point["x"]), float(point["y"]), float(attrs["level"])))
    return sources


# ---------------------------------------------------------------------------
# Comfort index


def clamp01(x: np.ndarray) -> np.ndarray:
    return np.minimum(1.0, np.maximum(0.0, x))


def combine_comfort(temperature: dict, noise: dict, w_t: float, w_n: float) -> dict:
    """index = clamp01(1 - wT*normT - wN*normN), cell-wise, with
    normT = clamp01((T-20)/20) and normN = clamp01((L-40)/40)."""
    t = grid_values(temperature)
    n = grid_values(noise)
    if t.shape != n.shape:
        raise ValueError("temperature and noise grids are not congruent")
    norm_t = clamp01((t - 20.0) / 20.0)
    norm_n = clamp01((n - 40.0) / 40.0)
    index = clamp01(1.0 - w_t * norm_t - w_n * norm_n)
    return grid_dict(
        temperature["width"], temperature["height"], index.reshape(-1).tolist(),
        cell_size=temperature["cellSize"], origin=tuple(temperature["origin"]),
    )


# ---------------------------------------------------------------------------
# Process descriptions (the machine-readable contracts)


def heat_diffusion_description() -> ProcessDescription:
    return ProcessDescription(
        summary=ProcessSummary(
            id="heat-diffusion",
            version="1.0.0",
            title="Heat diffusion",
            description="Explicit finite-difference heat diffusion on a grid with insulated boundaries.",
            keywords=("heat", "grid", "diffusion"),
        ),
        inputs={
            "grid": InputDescription(title="Initial temperature grid", dataKind="numberGrid"),
            "alpha": InputDescription(
                title="Diffusion coefficient", dataKind="number",
                minOccurs=0, bounds=(0.0, 0.25), defaultValue=0.1, has_default=True,
            ),
            "iterations": InputDescription(
                title="Number of time steps", dataKind="integer",
                minOccurs=0, bounds=(0, 10000), defaultValue=10, has_default=True,
            ),
        },
        outputs={"grid": OutputDescription(title="Diffused temperature grid", dataKind="numberGrid")},
    )


def noise_map_description() -> ProcessDescription:
    return ProcessDescription(
        summary=ProcessSummary(
            id="noise-map",
            version="1.0.0",
            title="Noise map",
            description="Point-source noise attenuation with energetic summation over a receiver grid.",
            keywords=("noise", "attenuation", "grid"),
        ),
        inputs={
            "sources": InputDescription(
                title="Noise sources (attributes.level in dB at 1 m)", dataKind="geoPointList",
            ),
            "width": InputDescription(
                title="Receiver grid width (cells)", dataKind="integer", bounds=(1, 4096),
            ),
            "height": InputDescription(
                title="Receiver grid height (cells)", dataKind="integer", bounds=(1, 4096),
            ),
            "cellSize": InputDescription(
                title="Receiver cell size (m)", dataKind="number",
                minOccurs=0, bounds=(1e-6, 1e6), defaultValue=1.0, has_default=True,
            ),
            "originX": InputDescription(
                title="Receiver grid origin x (m)", dataKind="number",
                minOccurs=0, defaultValue=0.0, has_default=True,
            ),
            "originY": InputDescription(
                title="Receiver grid origin y (m)", dataKind="number",
                minOccurs=0, defaultValue=0.0, has_default=True,
            ),
        },
        outputs={"levels": OutputDescription(title="Receiver dB grid", dataKind="numberGrid")},
    )


def comfort_index_description() -> ProcessDescription:
    return ProcessDescription(
        summary=ProcessSummary(
            id="comfort-index",
            version="1.0.0",
            title="Comfort index",
            description=(
                "Combined thermal and acoustic comfort in [0, 1], computed from the "
                "heat and noise sub-models executed through a platform."
            ),
            keywords=("comfort", "chained", "multi-model"),
        ),
        inputs={
            "grid": InputDescription(
                title="Initial temperature grid (also fixes receiver geometry)", dataKind="numberGrid",
            ),
            "sources": InputDescription(
                title="Noise sources (attributes.level in dB at 1 m)", dataKind="geoPointList",
            ),
            "alpha": InputDescription(
                title="Diffusion coefficient", dataKind="number",
                minOccurs=0, bounds=(0.0, 0.25), defaultValue=0.1, has_default=True,
            ),
            "iterations": InputDescription(
                title="Heat time steps", dataKind="integer",
                minOccurs=0, bounds=(0, 10000), defaultValue=10, has_default=True,
            ),
            "wT": InputDescription(
                title="Thermal weight", dataKind="number",
                minOccurs=0, bounds=(0.0, 1.0), defaultValue=0.5, has_default=True,
            ),
            "wN": InputDescription(
                title="Acoustic weight", dataKind="number",
                minOccurs=0, bounds=(0.0, 1.0), defaultValue=0.5, has_default=True,
            ),
        },
        outputs={"index": OutputDescription(title="Comfort index grid", dataKind="numberGrid")},
    )


# ---------------------------------------------------------------------------
# Executors (the registration-facing callables)


def heat_diffusion_executor(inputs: dict, ctx=None) -> dict:
    grid = inputs["grid"]
    result = heat_diffusion(grid, float(inputs["alpha"]), int(inputs["iterations"]), ctx=ctx)
    return {"grid": result}


def noise_map_executor(inputs: dict, ctx=None) -> dict:
    sources = sources_from_points(inputs["sources"])
    result = noise_map(
        sources,
        int(inputs["width"]),
        int(inputs["height"]),
        cell_size=float(inputs["cellSize"]),
        origin=(float(inputs["originX"]), float(inputs["originY"])),
        ctx=ctx,
    )
    return {"levels": result}


class ComfortIndexExecutor:
    """Runs the heat and noise sub-models through a platform endpoint and
    combines the results. The two upstream executions run concurrently.

    The platform call goes over HTTP even when everything is co-located, so
    chained model-to-model communication is genuinely exercised.
    """

    def __init__(self, platform_url: str, heat_process_id: str = "heat-diffusion",
                 noise_process_id: str = "noise-map", token: str | None = None,
                 timeout_seconds: float = 30.0):
        self.platform_url = platform_url.rstrip("/")
        self.heat_process_id = heat_process_id
        self.noise_process_id = noise_process_id
        self.token = token
        self.timeout_seconds = timeout_seconds

    def _execute_remote(self, process_id: str, exec_inputs: dict) -> dict:
        from .client import ApiClient, RemoteError  # deferred: keeps import graph acyclic

        client = ApiClient(self.platform_url, token=self.token, timeout=self.timeout_seconds)
        try:
            return client.execute(process_id, exec_inputs)
        except RemoteError as exc:
            raise RuntimeError(f"sub-model {process_id!r} failed: {exc.problem_text()}") from exc

    def __call__(self, inputs: dict, ctx=None) -> dict:
        grid = inputs["grid"]
        heat_inputs = {
            "grid": grid,
            "alpha": inputs["alpha"],
            "iterations": inputs["iterations"],
        }
        noise_inputs = {
            "sources": inputs["sources"],
            "width": grid["width"],
            "height": grid["height"],
            "cellSize": grid["cellSize"],
            "originX": grid["origin"][0],
            "originY": grid["origin"][1],
        }
        with ThreadPoolExecutor(max_workers=2) as pool:
            heat_future = pool.submit(self._execute_remote, self.heat_process_id, heat_inputs)
            noise_future = pool.submit(self._execute_remote, self.noise_process_id, noise_inputs)
            heat_outputs = heat_future.result()
            noise_outputs = noise_future.result()
        if ctx is not None:
            ctx.check_cancelled()
        index = combine_comfort(
            heat_outputs["grid"], noise_outputs["levels"],
            float(inputs["wT"]), float(inputs["wN"]),
        )
        return {"index": index}


def comfort_index_local(grid: dict, sources: list[dict], alpha: float, iterations: int,
                        w_t: float, w_n: float) -> dict:
    """Reference composition without the platform round trip; must equal the
    chained execution exactly for deterministic inputs."""
    heat = heat_diffusion(grid, alpha, iterations)
    noise = noise_map(
        sources_from_points(sources), grid["width"], grid["height"],
        cell_size=grid["cellSize"], origin=tuple(grid["origin"]),
    )
    return combine_comfort(heat, noise, w_t, w_n)
