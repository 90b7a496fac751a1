"""Exception hierarchy shared by all modules."""


class NricError(Exception):
    """Base class for all errors raised by this package."""


class MeshTopologyError(NricError):
    """Connectivity is non-manifold, non-orientable or not simply connected."""


class DegenerateFace(NricError):
    """A face of the vertex positions has (numerically) zero area."""


class TriangleInequalityViolated(NricError):
    """Edge lengths of a face do not form a strict triangle."""


class ReferenceDegenerate(NricError):
    """The undeformed (first) argument of an energy is not admissible."""


class InfeasiblePoint(NricError):
    """Derivatives requested at a point where the energy is infinite."""


class NotOnManifold(NricError):
    """Integrability residual exceeds the configured tolerance."""


class InfeasibleStart(NricError):
    """Initial iterate violates the triangle inequalities."""


class EndpointInfeasible(NricError):
    """Geodesic endpoint is not admissible."""


class ParseError(NricError):
    """Malformed input file."""


class FactorizationError(NricError):
    """Sparse factorization failed for a reason other than indefiniteness."""
