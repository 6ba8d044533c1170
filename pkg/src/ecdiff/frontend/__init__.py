from .parser import parse
from .patterns import detect_sync_patterns
from .program import INIT_PREFIX, Program, Stmt, ThreadDef, eval_expr, walk
from .structure import Cfg, CriticalSectionMap, Region, Structure, build_cfg, build_structure

__all__ = [
    "INIT_PREFIX", "Cfg", "CriticalSectionMap", "Program", "Region", "Stmt", "Structure", "ThreadDef",
    "build_cfg", "build_structure", "detect_sync_patterns", "eval_expr", "parse", "walk",
]
