"""smech: symbolic-numeric mechanics on supermanifolds.

Builds Tulczyjew phase dynamics from Lagrangians in even and odd coordinates,
generates Euler-Lagrange equations, expands trajectories over a finite
Grassmann algebra, integrates them, and verifies solutions, symmetries, and
constants of motion.
"""

from .grassmann import GrassmannElement, Parity, gadd, ginv, gmul, parity_of
from .mech import (
    ConstraintSpec,
    ImplicitReport,
    LagrangianSystem,
    NormalForm,
    PhaseDynamics,
    SuperVectorField,
    alpha_inv,
    alpha_map,
    check_symmetry,
    constrained_tulczyjew,
    euler_lagrange,
    induced_chart_change,
    lagrangian_differential,
    normal_form,
    phase_generators,
    tangent_lift,
    total_derivative,
    tulczyjew,
)
from .modelio import (
    ModelFile,
    ModelSyntaxError,
    load_model,
    parse_element,
    parse_expr_text,
    parse_model,
    render_element,
    render_model,
    read_trajectory,
    write_trajectory,
)
from .scurves import (
    ComponentSystem,
    IntegrationDiverged,
    Reparametrisation,
    SPoint,
    check_constant,
    expand_system,
    integrate,
    numeric_symmetry_check,
    realize_solution,
    reparametrise,
    system_for,
    verify_solution,
)
from .superexpr import (
    SuperExpr,
    Symbol,
    SymbolTable,
    deven,
    dodd_left,
    eval_at,
    is_even_lagrangian,
    parity_of_expr,
    render_expr,
    substitute,
)
from .trajectory import Trajectory

__version__ = "0.1.0"
