"""clonecheck: static verification of secure object-copying policies."""

from .abstract import (
    BOT,
    TOP,
    TOP_OUT,
    PolicyGraph,
    TypeTriple,
    abstract_eval_path,
    format_type,
    gc_canonicalize,
    interp_check,
    is_node,
    phi_translate,
    subtype,
    type_equiv,
)
from .infer import (
    CheckRejection,
    InternalError,
    MethodVerdict,
    ProgramReport,
    check_method,
    check_program,
    join,
    kill_succ,
    loop_fixpoint,
    transfer,
    widen,
)
from .interp import (
    Final,
    FuelExhausted,
    Obj,
    RunOutcome,
    State,
    Stuck,
    eval_command,
    format_heap_dump,
    havoc_call,
    reach,
    reach_plus,
)
from .lang import (
    Policy,
    Program,
    RawProgram,
    check_overriding,
    local_vars,
    lookup,
    resolve_program,
    subclass_of,
)
from .parser import ParseError, SourceFile, parse_program, parse_text, pretty_print
from .paths import (
    ABSENT,
    AccessPath,
    PolicyVerdict,
    eval_path,
    path_in_policy,
    policy_holds,
    secure_call_check,
)

__version__ = "0.1.0"
