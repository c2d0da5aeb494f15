import os

DEFAULT_VERTEX_BUDGET = 10**6
DEFAULT_DENSE_BUDGET = 5000


def vertex_budget(override=None):
    """Vertex budget, honouring ``SPECTREE_BUDGET`` when no override is given."""
    if override is not None:
        return int(override)
    env = os.environ.get("SPECTREE_BUDGET")
    if env:
        return int(float(env))
    return DEFAULT_VERTEX_BUDGET
