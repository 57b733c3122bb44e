import numpy as np

from src.Maze.Maze import CellMap
from src.utils.csv_io import read_rows, write_rows


def export_heatmap(values, cell_map: CellMap, path: str):
    """
    "row,col,value" per free cell, in state order. Walls have no row.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (cell_map.n_states,):
        raise ValueError(f"heatmap needs {cell_map.n_states} values, got shape {values.shape}")
    write_rows(path, ["row", "col", "value"],
               ((row, col, float(v)) for (row, col), v in zip(cell_map.cells, values)))


def read_heatmap(path: str, cell_map: CellMap) -> np.ndarray:
    header, rows = read_rows(path)
    if header != ["row", "col", "value"]:
        raise ValueError(f"{path} is not a heatmap file")
    values = np.full(cell_map.n_states, np.nan)
    for row, col, value in rows:
        values[cell_map.state((int(row), int(col)))] = float(value)
    return values
