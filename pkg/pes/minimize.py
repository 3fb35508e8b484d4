import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from chem.molecule import Conformation, Molecule
from pes.forcefield import ForceField, energy_and_gradient

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
SHRINK = 0.5


@dataclass(frozen=True)
class MinimizationResult:
    conformation: Conformation
    converged: bool
    iterations: int
    energies: List[float] = field(default_factory=list)

    @property
    def energy(self) -> float:
        return self.energies[-1]


def minimize(
    force_field: ForceField,
    molecule: Molecule,
    start: Conformation,
    gtol: float = 1e-8,
    max_iter: int = 100_000,
) -> MinimizationResult:
    """Gradient descent with Armijo backtracking until ||grad E||_inf < gtol.

    The trial step is the Barzilai-Borwein length of the previous accepted
    step.  Once energy differences fall below round-off, a step that lowers
    the gradient norm without raising the energy is also accepted.
    Non-convergence is reported in the result, never raised.
    """
    molecule.check_conformation(start)
    shape = start.positions.shape
    x = start.coords.copy()
    e, g = energy_and_gradient(force_field, x.reshape(shape), warn=False)
    g = g.reshape(-1)
    energies = [e]
    step = 1e-3

    for iteration in range(max_iter):
        if np.max(np.abs(g), initial=0.0) < gtol:
            return MinimizationResult(Conformation(x), True, iteration, energies)

        g_sq = float(g @ g)
        t = step
        while True:
            x_new = x - t * g
            e_new, g_new = energy_and_gradient(force_field, x_new.reshape(shape), warn=False)
            g_new = g_new.reshape(-1)
            if e_new <= e - ARMIJO_C * t * g_sq:
                break
            flat = abs(e_new - e) <= 1e-13 * max(1.0, abs(e))
            if flat and e_new <= e and float(g_new @ g_new) < g_sq:
                break
            t *= SHRINK
            if t < 1e-20:
                logger.warning(f"Line search stalled at iteration {iteration} (max |grad| {np.max(np.abs(g)):.3e})")
                return MinimizationResult(Conformation(x), False, iteration, energies)

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 2.0 * t
        x, e, g = x_new, e_new, g_new
        energies.append(e)

    converged = np.max(np.abs(g), initial=0.0) < gtol
    if not converged:
        logger.warning(f"Minimization did not converge in {max_iter} iterations (max |grad| {np.max(np.abs(g)):.3e})")
    return MinimizationResult(Conformation(x), bool(converged), max_iter, energies)
