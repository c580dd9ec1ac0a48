"""
Regularized point-to-plane least squares.

Each pair (p', q, n) contributes the row a = (p' x n, n) and the right-hand
side b = (q - p') . n, where p' is the source point under the current
estimate. The increment x = (alpha, beta, gamma, tx, ty, tz) solves

    (A^T A + 2 lambda n P^T P) x = A^T b,    P = [I3 | 0]

which minimises (1/2n)|Ax - b|^2 + lambda |Px|^2. The lambda(n) = c/n
variant makes the penalty weight 2c regardless of pair count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from app.correspond import CorrespondenceSet
from app.errors import DegenerateSystem
from app.geom import TwistParams, small_angle_transform
from app.models import LambdaMode

logger = logging.getLogger(__name__)

_UPPER = [(i, j) for i in range(6) for j in range(i, 6)]


@dataclass(frozen=True)
class NormalEquations:
    ata: np.ndarray
    atb: np.ndarray
    n: int

    def merge(self, other: "NormalEquations") -> "NormalEquations":
        return NormalEquations(self.ata + other.ata, self.atb + other.atb, self.n + other.n)


@dataclass(frozen=True)
class Regularizer:
    """Quadratic penalty on the three rotation parameters"""
    lam: float = 0.0
    mode: LambdaMode = LambdaMode.CONSTANT

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    @property
    def p_matrix(self) -> np.ndarray:
        return np.hstack([np.eye(3), np.zeros((3, 3))])

    @property
    def ptp(self) -> np.ndarray:
        return np.diag([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])

    def weight(self, n: int) -> float:
        """Diagonal weight added to the rotation block for n pairs"""
        if self.mode == LambdaMode.INVERSE_N:
            return 2.0 * self.lam
        return 2.0 * self.lam * n


def linear_rows(c: CorrespondenceSet) -> Tuple[np.ndarray, np.ndarray]:
    """Dense A (n x 6) and b (n,) of the linearised system"""
    p = c.transformed_points
    n = c.target_normals
    a = np.hstack([np.cross(p, n), n])
    b = np.einsum("ij,ij->i", c.target_points - p, n)
    return a, b


def _accumulate(a: np.ndarray, b: np.ndarray) -> Tuple[List[float], List[float]]:
    """Exactly rounded sums of the upper triangle of A^T A and of A^T b"""
    upper = [math.fsum(a[:, i] * a[:, j]) for i, j in _UPPER]
    rhs = [math.fsum(a[:, i] * b) for i in range(6)]
    return upper, rhs


def normal_equations_from_rows(a: np.ndarray, b: np.ndarray, partitions: int = 1) -> NormalEquations:
    """
    Parallel reduction over row partitions.

    Each partition is summed with math.fsum and the partials are merged
    with fsum again, so results agree across partition counts to within
    rounding of the final merge.
    """
    a = np.asarray(a, dtype=float).reshape(-1, 6)
    b = np.asarray(b, dtype=float).ravel()

    chunks = list(zip(np.array_split(a, max(1, partitions)), np.array_split(b, max(1, partitions))))
    if len(chunks) == 1:
        partials = [_accumulate(*chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=min(len(chunks), 8)) as pool:
            partials = list(pool.map(lambda chunk: _accumulate(*chunk), chunks))

    ata = np.zeros((6, 6))
    for k, (i, j) in enumerate(_UPPER):
        ata[i, j] = ata[j, i] = math.fsum(part[0][k] for part in partials)
    atb = np.array([math.fsum(part[1][i] for part in partials) for i in range(6)])

    return NormalEquations(ata, atb, int(a.shape[0]))


def build_normal_equations(c: CorrespondenceSet, partitions: int = 1) -> NormalEquations:
    a, b = linear_rows(c)
    return normal_equations_from_rows(a, b, partitions)


def solve_regularized(
    ne: NormalEquations,
    reg: Regularizer,
    rcond: float = 1e-10,
    require_full_rank: bool = False,
) -> TwistParams:
    """
    Minimum-norm solution through an SVD pseudo-inverse.

    Singular values below rcond * sigma_max are dropped, which leaves
    unconstrained directions at zero.

    Raises:
        DegenerateSystem: no pairs, no constraint at all, or (with
            require_full_rank) fewer than six usable directions
    """
    if ne.n < 1:
        raise DegenerateSystem("No pairs in the normal equations")

    system = ne.ata + reg.weight(ne.n) * reg.ptp
    if not np.all(np.isfinite(system)) or not np.all(np.isfinite(ne.atb)):
        raise DegenerateSystem("Normal equations contain non-finite values")

    u, s, vt = np.linalg.svd(system)
    if s[0] <= 0.0:
        raise DegenerateSystem("All singular values are zero")

    keep = s > rcond * s[0]
    rank = int(keep.sum())
    if rank < 6:
        if require_full_rank:
            raise DegenerateSystem(f"Rank {rank} system; motion is not fully constrained")
        logger.warning("Rank-deficient system (rank %d); null space left at zero", rank)

    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    x = vt.T @ (inv_s * (u.T @ ne.atb))
    return TwistParams.from_vector(x)


def system_rank(ne: NormalEquations, rcond: float = 1e-9) -> int:
    """Number of eigenvalues of A^T A above rcond * largest"""
    eigenvalues = np.linalg.eigvalsh(ne.ata)
    top = float(eigenvalues.max())
    if top <= 0:
        return 0
    return int(np.sum(eigenvalues > rcond * top))


def pointwise_residual(c: CorrespondenceSet, x: TwistParams) -> Tuple[np.ndarray, float]:
    """Signed point-to-plane residuals ((M(x) p' - q) . n) and their RMS"""
    m = small_angle_transform(x)
    moved = c.transformed_points @ m[:3, :3].T + m[:3, 3]
    residuals = np.einsum("ij,ij->i", moved - c.target_points, c.target_normals)
    rms = float(np.sqrt(np.mean(residuals ** 2))) if residuals.size else 0.0
    return residuals, rms
