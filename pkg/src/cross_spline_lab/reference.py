"""Published benchmark values that ``csn reproduce`` compares against

Each table maps a row (scenario or dataset) to an algorithm's (train, test) pair.
Continuous tables report MSE, binary tables report AUC.
"""

from cross_spline_lab.errors import ConfigurationError

ALGORITHMS = ("TreeNet", "FCNN", "XGBoost", "TreeNet2", "XGBoost3")
EXTERNAL_ALGORITHMS = ("XGBoost", "XGBoost3")
EXTERNAL_STATUS = "external - not run"


def _rows(text: str) -> dict[str, dict[str, tuple[float, float]]]:
    """Parse 'row  5 train values  5 test values' lines"""
    table = {}
    for line in text.strip().splitlines():
        name, *values = line.split()
        numbers = [float(v) for v in values]
        train, test = numbers[:5], numbers[5:]
        table[name] = {alg: (tr, te) for alg, tr, te in zip(ALGORITHMS, train, test)}
    return table


SIMULATION_MSE = _rows("""
main_cont  0.997 1.069 0.938 0.954 0.790  1.021 1.438 1.035 1.072 1.054
main_jump  1.012 1.085 0.953 1.028 0.869  1.036 1.289 1.017 1.083 1.038
2way_cont  0.975 0.972 0.389 1.050 1.189  1.101 1.415 1.325 1.264 1.715
2way_jump  1.004 1.204 0.811 1.088 0.881  1.143 1.647 1.126 1.262 1.140
2way_pure  0.926 0.924 0.233 1.023 0.952  1.100 1.315 1.254 1.143 1.503
3way_cont  1.060 1.131 0.137 0.952 2.529  1.440 2.058 2.854 1.464 3.554
3way_jump  1.130 1.612 0.650 1.390 0.991  1.438 1.921 1.209 1.547 1.298
3way_pure  1.008 0.882 0.174 1.041 1.817  1.254 1.589 1.761 1.270 2.459
""")

SIMULATION_AUC = _rows("""
main_cont  0.822 0.801 0.832 0.827 0.867  0.809 0.750 0.805 0.805 0.803
main_jump  0.824 0.826 0.832 0.821 0.856  0.805 0.766 0.809 0.803 0.806
2way_cont  0.900 0.866 0.991 0.901 0.898  0.861 0.812 0.857 0.854 0.835
2way_jump  0.906 0.892 0.917 0.902 0.916  0.879 0.854 0.893 0.877 0.891
2way_pure  0.813 0.714 0.982 0.762 0.689  0.690 0.627 0.673 0.682 0.630
3way_cont  0.928 0.914 0.999 0.914 0.916  0.904 0.866 0.900 0.897 0.892
3way_jump  0.904 0.908 0.930 0.914 0.918  0.883 0.854 0.898 0.883 0.895
3way_pure  0.786 0.775 0.983 0.774 0.699  0.723 0.601 0.656 0.689 0.609
""")

LARGE_SAMPLE_MSE = _rows("""
3way_cont  1.017 0.994 0.497 0.985 2.321  1.108 1.222 1.966 1.116 2.887
3way_jump  1.077 1.056 0.833 1.027 1.070  1.137 1.151 1.087 1.199 1.187
3way_pure  0.994 1.018 0.388 1.019 1.418  1.082 1.094 1.306 1.088 1.858
""")

LARGE_SAMPLE_AUC = _rows("""
3way_cont  0.946 0.940 0.965 0.945 0.923  0.940 0.926 0.919 0.937 0.907
3way_jump  0.907 0.899 0.919 0.903 0.913  0.898 0.879 0.905 0.896 0.904
3way_pure  0.795 0.796 0.851 0.800 0.726  0.778 0.767 0.738 0.772 0.670
""")

BIKE_SHARING_MSE = _rows("""
bike_sharing  0.099 0.073 0.049 0.094 0.083  0.106 0.120 0.097 0.108 0.100
""")


class TableSpec:
    """One reproducible table: which responses, rows and sample sizes it covers"""

    def __init__(self, table_id: str, parts: list[tuple[str, str, dict]], n: int | None, n_test: int | None):
        self.table_id = table_id
        self.parts = parts  # (response, metric, rows)
        self.n = n
        self.n_test = n_test

    @property
    def rows(self) -> list[str]:
        seen = []
        for _, _, table in self.parts:
            seen.extend(r for r in table if r not in seen)
        return seen


TABLES = {
    "4-2": TableSpec("4-2", [("continuous", "mse", SIMULATION_MSE)], n=10_000, n_test=50_000),
    "4-3": TableSpec("4-3", [("binary", "auc", SIMULATION_AUC)], n=10_000, n_test=50_000),
    "4-4": TableSpec("4-4", [("continuous", "mse", LARGE_SAMPLE_MSE), ("binary", "auc", LARGE_SAMPLE_AUC)],
                     n=50_000, n_test=50_000),
    "5-2": TableSpec("5-2", [("continuous", "mse", BIKE_SHARING_MSE)], n=None, n_test=None),
}


def get_table(table_id: str) -> TableSpec:
    if table_id not in TABLES:
        raise ConfigurationError(f"unknown table '{table_id}', valid ids: {', '.join(TABLES)}")
    return TABLES[table_id]


def reference_value(table_id: str, response: str, row: str, algorithm: str, split: str = "test") -> float:
    """Published value for one cell
    Args:
        table_id (str): '4-2', '4-3', '4-4' or '5-2'
        response (str): 'continuous' or 'binary'
        row (str): scenario name or 'bike_sharing'
        algorithm (str): one of ALGORITHMS
        split (str): 'train' or 'test'
    Returns:
        float: the published number
    """
    published = get_table(table_id)
    for part_response, _, table in published.parts:
        if part_response == response and row in table:
            train, test = table[row][algorithm]
            return train if split == "train" else test
    raise ConfigurationError(f"table {table_id} has no {response} row '{row}'")
