import math
from numbers import Real
from typing import Any, Tuple

TOPOLOGY_KINDS = ('leaderless', 'leader_following')


def _is_number(value: Any) -> bool:
    return isinstance(value, Real) and not isinstance(value, bool) and math.isfinite(value)


def validate_matrix_entries(name: str, entries: Any, rows: int, cols: int) -> Tuple[bool, str]:
    """
    Check a row-major matrix field against its declared dimensions

    Args:
        name: Field name used in the message
        entries: Flat list of numbers
        rows: Declared row count
        cols: Declared column count

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not isinstance(entries, list):
        return False, f"{name} must be a flat array of numbers"
    if len(entries) != rows * cols:
        return False, f"{name} must have {rows}x{cols}={rows * cols} entries, got {len(entries)}"
    if not all(_is_number(v) for v in entries):
        return False, f"{name} contains non-numeric or non-finite entries"
    return True, f"{name} is valid"


def validate_matrix_document(name: str, doc: Any) -> Tuple[bool, str]:
    """Check a {"rows", "cols", "data"} matrix document"""
    if not isinstance(doc, dict) or not {'rows', 'cols', 'data'} <= set(doc):
        return False, f"{name} must be an object with rows, cols and data"
    rows, cols = doc['rows'], doc['cols']
    if not (isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0):
        return False, f"{name} dimensions must be positive integers"
    return validate_matrix_entries(name, doc['data'], rows, cols)


def validate_gains_document(doc: Any) -> Tuple[bool, str]:
    """Check a gains file holding Ku and Kphi matrix documents"""
    if not isinstance(doc, dict):
        return False, "gains file must hold an object"
    gains = doc.get('gains', doc)
    for name in ('Ku', 'Kphi'):
        if name not in gains:
            return False, f"gains file is missing {name}"
        ok, message = validate_matrix_document(name, gains[name])
        if not ok:
            return False, message
    return True, "Valid gains file"


def validate_topology_section(section: Any) -> Tuple[bool, str]:
    if not isinstance(section, dict):
        return False, "topology section is required"
    if section.get('kind') not in TOPOLOGY_KINDS:
        return False, f"topology kind must be one of {TOPOLOGY_KINDS}"
    n = section.get('N')
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        return False, "topology N must be an integer >= 2"
    edges = section.get('edges')
    if not isinstance(edges, list) or not edges:
        return False, "topology edges must be a non-empty array of [i, j, w] triples"
    for edge in edges:
        if not (isinstance(edge, list) and len(edge) == 3 and all(_is_number(v) for v in edge)):
            return False, f"malformed edge {edge!r}"
        if int(edge[0]) != edge[0] or int(edge[1]) != edge[1]:
            return False, f"edge {edge!r} must use integer agent indices"
    return True, "Valid topology"


def validate_scenario_config(data: Any) -> Tuple[bool, str]:
    """
    Validate a scenario configuration document before it is turned into objects

    Args:
        data: Parsed JSON document

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not isinstance(data, dict):
        return False, "scenario configuration must be an object"

    for section in ('model', 'topology', 'weights', 'budget', 'initial_states'):
        if section not in data:
            return False, f"missing section '{section}'"

    model = data['model']
    if not isinstance(model, dict):
        return False, "model section must be an object"
    dims = {}
    for key in ('n', 'm', 'd'):
        value = model.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            return False, f"model {key} must be a positive integer"
        dims[key] = value
    n, m, d = dims['n'], dims['m'], dims['d']
    for name, rows, cols in (('A', n, n), ('B', n, m), ('C', d, n)):
        ok, message = validate_matrix_entries(f"model {name}", model.get(name), rows, cols)
        if not ok:
            return False, message

    ok, message = validate_topology_section(data['topology'])
    if not ok:
        return False, message
    agents = data['topology']['N']

    weights = data['weights']
    if not isinstance(weights, dict):
        return False, "weights section must be an object"
    for name, size in (('Q', n), ('R', m)):
        ok, message = validate_matrix_entries(f"weights {name}", weights.get(name), size, size)
        if not ok:
            return False, message

    if not _is_number(data['budget']) or data['budget'] <= 0:
        return False, "budget must be a positive number"

    for key in ('initial_states', 'protocol_initial_states'):
        states = data.get(key)
        if states is None and key == 'protocol_initial_states':
            continue
        if not isinstance(states, list) or len(states) != agents:
            return False, f"{key} must list one state per agent ({agents})"
        for j, state in enumerate(states, start=1):
            if not (isinstance(state, list) and len(state) == n and all(_is_number(v) for v in state)):
                return False, f"{key} of agent {j} must be {n} finite numbers"

    sim = data.get('sim', {})
    if not isinstance(sim, dict):
        return False, "sim section must be an object"
    dt, horizon = sim.get('dt'), sim.get('horizon')
    if dt is not None and (not _is_number(dt) or dt <= 0):
        return False, "sim dt must be positive"
    if horizon is not None and (not _is_number(horizon) or horizon <= 0):
        return False, "sim horizon must be positive"
    if dt is not None and horizon is not None and horizon < dt:
        return False, "sim horizon must be at least dt"

    solver = data.get('solver', {})
    if not isinstance(solver, dict):
        return False, "solver section must be an object"
    for key in ('margin', 'delta', 'psd_tolerance', 'solve_headroom', 'psd_headroom'):
        if key in solver and (not _is_number(solver[key]) or solver[key] <= 0):
            return False, f"solver {key} must be positive"
    if 'max_iters' in solver and (not isinstance(solver['max_iters'], int) or solver['max_iters'] < 1):
        return False, "solver max_iters must be a positive integer"
    for key in ('certify_retries', 'backtrack_steps'):
        if key in solver and (not isinstance(solver[key], int) or solver[key] < 0):
            return False, f"solver {key} must be a non-negative integer"

    return True, "Valid scenario configuration"
