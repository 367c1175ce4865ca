"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each case swaps ``texbake.kernels`` to one backend and runs a realistic call:
a view rasterization, a UV atlas rasterization, and a masked diffusion fill.
Outputs of the two backends are compared as well, so a speedup never hides a
divergence.
"""

import argparse
import json
import time

import numpy as np

from texbake import fixtures, kernels
from texbake.camera import orbit_cameras, orbit_for_mesh
from texbake.raster import rasterize
from texbake.uvproject import rasterize_uv


def _use(module):
    kernels.raster_triangles = module.raster_triangles
    kernels.jacobi_fill = module.jacobi_fill


def _view(mesh, res):
    cam = orbit_cameras(orbit_for_mesh(mesh, frames=8, height=0.4, resolution=res))[1]
    return lambda: rasterize(mesh, cam).depth


def _atlas(mesh, res):
    return lambda: rasterize_uv(mesh, res).position


def _fill(size):
    yy, xx = np.mgrid[0:size, 0:size]
    hole = (xx - size / 2) ** 2 + (yy - size / 2) ** 2 < (0.4 * size) ** 2
    label = np.where(xx < size // 2, 0, 1).astype(np.int64).ravel()
    rng = np.random.default_rng(0)
    base = rng.uniform(0, 1, (size * size, 3))
    masked = np.flatnonzero(hole.ravel()).astype(np.int64)

    def run():
        color = base.copy()
        filled = (~hole).ravel().astype(np.uint8)
        color[masked] = 0.0
        kernels.jacobi_fill(color, filled, label, masked, size, 400, 0.0)
        return color

    return run


def _time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write the timings here")
    args = ap.parse_args(argv)

    sphere = fixtures.uv_sphere(n_lat=48, n_lon=96)
    cases = {
        f"view raster, {sphere.n_faces} faces, 512^2": _view(sphere, 512),
        f"view raster, {sphere.n_faces} faces, 1024^2": _view(sphere, 1024),
        "UV atlas raster, 1024^2": _atlas(sphere, 1024),
        "masked fill, 256^2, 400 sweeps": _fill(256),
    }
    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; timing the NumPy fallback only")
    saved = (kernels.raster_triangles, kernels.jacobi_fill)
    rows = []
    print(f"{'case':<40}" + "".join(f"{name:>12}" for name in found) + f"{'speedup':>10}  identical")
    try:
        for name, fn in cases.items():
            times, outs = {}, {}
            for backend, module in found.items():
                _use(module)
                times[backend], outs[backend] = _time(fn, args.repeat)
            same = len(outs) < 2 or np.array_equal(outs["python"], outs["cython"])
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:<40}" + "".join(f"{times[b]:>11.3f}s" for b in found) + f"{speed:>9.1f}x  {same}")
            rows.append({"case": name, "seconds": times, "speedup": speed, "identical": bool(same)})
    finally:
        kernels.raster_triangles, kernels.jacobi_fill = saved
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
