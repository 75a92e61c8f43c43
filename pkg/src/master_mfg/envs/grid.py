"""
移動核モジュール。

このモジュールは、探索とビーチバーで共有する、摂動付きの移動遷移核を構築します。
意図した移動の後に、独立に選ばれた摂動方向を移動後のセルへ適用します。
"""

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.spaces import ActionSpace, GridGeometry, StateSpace

# 摂動なしの確率
MOVE_SUCCESS_PROB: float = 0.9

_GRID_PERTURBATIONS: tuple[tuple[int, ...], ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))
_LINE_PERTURBATIONS: tuple[tuple[int, ...], ...] = ((-1,), (1,))


def displace(space: StateSpace, x: int, displacement: tuple[int, ...]) -> int:
    """状態 x に変位を適用します。領域外や壁への移動はその場に留まります。"""
    if isinstance(space.geometry, GridGeometry):
        row, col = space.coords(x)
        new_row, new_col = row + displacement[0], col + displacement[1]
        geometry = space.geometry
        if not (0 <= new_row < geometry.height and 0 <= new_col < geometry.width):
            return x
        if (new_row, new_col) in geometry.blocked:
            return x
        return space.index(new_row, new_col)
    target = x + displacement[0]
    if not 0 <= target < space.size:
        return x
    return target


def movement_kernel(
    space: StateSpace,
    actions: ActionSpace,
    success_prob: float = MOVE_SUCCESS_PROB,
) -> npt.NDArray[np.float64]:
    """摂動付き移動の遷移核 (|𝒳|, |𝒜|, |𝒳|) を構築します。

    格子では上下左右の各摂動が (1 - success_prob)/4、直線では左右が各
    (1 - success_prob)/2 の確率で起こります。同じセルに落ちる質量は合算します。
    壁セルからの行は自己ループです(壁セルには質量が入りません)。

    Args:
        space: 状態空間
        actions: 行動空間
        success_prob: 摂動なしの確率

    Returns:
        NDArray: 遷移核
    """
    if isinstance(space.geometry, GridGeometry):
        perturbations = _GRID_PERTURBATIONS
    else:
        perturbations = _LINE_PERTURBATIONS
    noise_prob = (1.0 - success_prob) / len(perturbations)

    kernel = np.zeros((space.size, actions.size, space.size))
    for x in range(space.size):
        if space.is_blocked(x):
            kernel[x, :, x] = 1.0
            continue
        for a, displacement in enumerate(actions.displacements):
            moved = displace(space, x, displacement)
            kernel[x, a, moved] += success_prob
            for perturbation in perturbations:
                kernel[x, a, displace(space, moved, perturbation)] += noise_prob
    kernel.flags.writeable = False
    return kernel
