"""Deep outcome-sampling MCCFR with a learned, variance-aware sampling policy."""

from .games import CHANCE, TERMINAL, GameState, IllegalActionError, InfoSetKey, KuhnPoker, LeducPoker, get_game
from .harness import PRESETS, RobustDeepMCCFR, RunConfig, RunResult, run, run_ablation_suite, run_sensitivity_sweep
from .tabular import OutcomeSamplingSolver, RegretTable, exploitability, regret_matching
from .training import TrainingConfig
from .tree import GameTree, get_tree

__all__ = [
    "CHANCE", "TERMINAL", "GameState", "IllegalActionError", "InfoSetKey", "KuhnPoker", "LeducPoker",
    "get_game", "PRESETS", "RobustDeepMCCFR", "RunConfig", "RunResult", "run", "run_ablation_suite",
    "run_sensitivity_sweep", "OutcomeSamplingSolver", "RegretTable", "exploitability", "regret_matching",
    "TrainingConfig", "GameTree", "get_tree",
]
__version__ = "0.1.0"
