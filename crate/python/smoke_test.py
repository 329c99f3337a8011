"""Quick check of the plasmode_py extension.

Build first:  cargo build -p plasmode-py --release
then run with PLASMODE_PY_LIB pointing at the built shared library, or with
the module installed (maturin develop -m crates/plasmode-py/Cargo.toml).
"""
import cmath
import importlib.machinery
import importlib.util
import math
import os
import sys


def load():
    lib = os.environ.get("PLASMODE_PY_LIB")
    if not lib:
        import plasmode_py
        return plasmode_py
    loader = importlib.machinery.ExtensionFileLoader("plasmode_py", lib)
    spec = importlib.util.spec_from_file_location("plasmode_py", lib, loader=loader)
    mod = importlib.util.module_from_spec(spec)
    loader.exec_module(mod)
    return mod


def main():
    pm = load()

    h = pm.hankel1_0(1.0 + 0j)
    assert abs(h - complex(0.7651976865579666, 0.0882569642156769)) < 1e-12, h

    mat = pm.Material()
    eps = mat.permittivity(mat.omega_p / 2)
    assert eps.real < 0

    mesh = pm.Mesh("ellipse", 128)
    assert mesh.n == 128 and len(mesh.nodes) == 128
    spec = pm.Spectrum(mesh, 6)
    lams = spec.lambdas
    assert abs(lams[0] - 0.5) < 1e-10
    assert abs(abs(lams[1]) - 1 / 3) < 1e-8, lams

    disk = pm.Spectrum(pm.Mesh("disk", 64), 4)
    assert max(abs(l) for l in disk.lambdas[1:]) < 1e-10

    radius, ratio, modes = spec.resonances(mat)
    assert len(modes) == 6 and all(m["omega_plus"].imag < 0 for m in modes)
    assert abs(modes[0]["omega_minus"] + modes[0]["omega_plus"].conjugate()) < 1e-3 * abs(modes[0]["omega_plus"])

    pulse = pm.Pulse()
    assert abs(pulse.value(4e-15) - 1.0) < 1e-12 and pulse.value(-1e-15) == 0

    solver = pm.BoundarySolver(mesh, mat)
    u = solver.scattered_field(0.6 * mat.omega_p, [(15.0, 0.0), (0.0, 15.0)])
    assert all(cmath.isfinite(v) for v in u)

    try:
        pm.Mesh("triangle")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown shape accepted")

    print("plasmode_py smoke test ok: lambda_1 = %.10f, |u_sca(A)| = %.3e" % (lams[1], abs(u[0])))


if __name__ == "__main__":
    sys.exit(main())
