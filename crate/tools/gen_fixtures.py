"""Regenerate the molecular FCIDUMP fixtures and their reference energies.

Requires PySCF. Integrals are written in the canonical RHF molecular-orbital
basis; the accompanying .toml file records geometry, the RHF energy and the
full-CI ground-state energy in the (n_up, n_down) sector of the FCIDUMP header.

    python3 tools/gen_fixtures.py fixtures/
"""

import math
import sys
from pathlib import Path

import numpy as np
import pyscf
from pyscf import fci, gto, scf
from pyscf.tools import fcidump

H4_DIAGONAL = 3.475953  # Angstrom
H4_ANGLES = [25, 70, 80, 85, 90, 95, 100, 110]
HF_BONDS = [0.96, 1.21, 1.46, 2.0, 2.73]
BH_BONDS = [1.0, 1.23, 2.0, 3.0]


def h4_geometry(gamma_deg):
    r = H4_DIAGONAL / 2.0
    half = math.radians(gamma_deg) / 2.0
    x, y = r * math.cos(half), r * math.sin(half)
    return [("H", (x, y, 0.0)), ("H", (-x, y, 0.0)), ("H", (-x, -y, 0.0)), ("H", (x, -y, 0.0))]


def diatomic(a, b, r):
    return [(a, (0.0, 0.0, 0.0)), (b, (0.0, 0.0, r))]


def emit(out_dir, name, atoms, note):
    mol = gto.M(atom=atoms, basis="sto-6g", unit="Angstrom", symmetry=False, verbose=0)
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.max_cycle = 500
    e_hf = mf.kernel()
    if not mf.converged:
        mf = scf.newton(mf)
        e_hf = mf.kernel()
    path = out_dir / f"{name}.fcidump"
    fcidump.from_scf(mf, str(path), tol=1e-15)
    cis = fci.FCI(mf)
    cis.conv_tol = 1e-13
    e_fci, _ = cis.kernel()
    nelec = mol.nelectron
    meta = out_dir / f"{name}.toml"
    coords = "\n".join(
        f'  ["{sym}", {c[0]:.10f}, {c[1]:.10f}, {c[2]:.10f}],' for sym, c in atoms
    )
    meta.write_text(
        f'name = "{name}"\n'
        f'basis = "sto-6g"\n'
        f'description = "{note}"\n'
        f"norb = {mol.nao}\n"
        f"nelec = {nelec}\n"
        f"e_hf = {e_hf:.15f}\n"
        f"e_fci = {e_fci:.15f}\n"
        f'generator = "pyscf {pyscf.__version__}, canonical RHF orbitals"\n'
        f"geometry_angstrom = [\n{coords}\n]\n"
    )
    print(f"{name}: norb={mol.nao} nelec={nelec} e_hf={e_hf:.10f} e_fci={e_fci:.10f}")


def main():
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
    out_dir.mkdir(parents=True, exist_ok=True)
    emit(out_dir, "h2_0.735", diatomic("H", "H", 0.735), "H2 at 0.735 A")
    for g in H4_ANGLES:
        emit(out_dir, f"h4_g{g:03d}", h4_geometry(g), f"H4 rectangle, diagonal {H4_DIAGONAL} A, gamma {g} deg")
    for r in HF_BONDS:
        emit(out_dir, f"hf_{r:.2f}", diatomic("F", "H", r), f"HF at {r} A")
    for r in BH_BONDS:
        emit(out_dir, f"bh_{r:.2f}", diatomic("B", "H", r), f"BH at {r} A")


if __name__ == "__main__":
    np.set_printoptions(precision=12)
    main()
