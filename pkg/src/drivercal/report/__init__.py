from .svg_renderer import SvgRenderer, write_svg
from .writers import (
    MSE_COLUMNS,
    ROLLOUT_COLUMNS,
    fits_frame,
    rollout_frame,
    write_consistency,
    write_csv,
    write_diversity,
    write_driver_mses,
    write_json,
    write_mse_table,
    write_param_distribution,
)

__all__ = [
    "MSE_COLUMNS",
    "ROLLOUT_COLUMNS",
    "SvgRenderer",
    "write_svg",
    "fits_frame",
    "rollout_frame",
    "write_consistency",
    "write_csv",
    "write_diversity",
    "write_driver_mses",
    "write_json",
    "write_mse_table",
    "write_param_distribution",
]
