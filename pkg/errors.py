"""Exceções do laboratório IFED."""

from typing import List, Optional, Sequence


class IFEDError(Exception):
    """Erro base de todas as falhas do laboratório"""


class ConfigurationError(IFEDError):
    """Configuração inválida (kernel, grade, material ou chave desconhecida)"""


class UnsupportedFixtureError(IFEDError):
    pass


class MeshError(IFEDError):
    """Malha lagrangiana inválida ou arquivo de malha malformado"""


class StencilOverflowError(IFEDError):
    def __init__(self, node: int, position: Sequence[float], component: Optional[int] = None):
        self.node = int(node)
        self.position = tuple(float(c) for c in position)
        self.component = component
        where = '' if component is None else f' (componente {component})'
        super().__init__(
            f"Estêncil do nó {self.node} em {self.position} não cabe na grade{where}"
        )


class SolverFailureError(IFEDError):
    def __init__(self, message: str, residuals: Optional[List[float]] = None):
        self.residuals = list(residuals or [])
        last = self.residuals[-1] if self.residuals else float('nan')
        super().__init__(f"{message} (resíduo final {last:.3e}, {len(self.residuals)} iterações)")


class InvertedElementError(IFEDError):
    def __init__(self, element: int, jacobian: float):
        self.element = int(element)
        self.jacobian = float(jacobian)
        super().__init__(f"Elemento {self.element} invertido (J = {self.jacobian:.6g})")


class StepRejectedError(IFEDError):
    """Passo rejeitado pela condição CFL; o chamador deve reduzir dt"""

    def __init__(self, cfl: float, dt: float, suggested_dt: float):
        self.cfl = float(cfl)
        self.dt = float(dt)
        self.suggested_dt = float(suggested_dt)
        super().__init__(
            f"CFL {self.cfl:.3f} excede o limite com dt={self.dt:.3e}; use dt <= {self.suggested_dt:.3e}"
        )


class SimulationDivergedError(IFEDError):
    """Estado não finito ou velocidade descontrolada"""
