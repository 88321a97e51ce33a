class CoverError(Exception):
    def __init__(self, message: str, context=None):
        super().__init__(message)
        self._context = context


class ValidationError(CoverError, ValueError):
    pass


class ParseError(ValidationError):
    """
    Raised while reading a task, GMM, environment or cover file. `path` and
    `row` locate the offending record; `row` is 1-based for CSV lines and
    0-based for JSON records.
    """

    def __init__(self, message: str, path=None, row=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append("row %s" % row)
        if where:
            message = "%s: %s" % (", ".join(where), message)
        super().__init__(message, row)
        self.path = path
        self.row = row


class CapacityError(CoverError):
    def __init__(self, message: str, nodes: int, budget: int):
        super().__init__("%s (%d > budget %d)" % (message, nodes, budget), nodes)
        self.nodes = nodes
        self.budget = budget


class DivergenceError(CoverError):
    def __init__(self, message: str, iteration: int):
        super().__init__("%s at iteration %d" % (message, iteration), iteration)
        self.iteration = iteration
