"""UWB/IMU fusion navigation on the extended pose group.

Subpackages cover the group primitives (:mod:`uwbnav.liegroup`), UWB
multilateration (:mod:`uwbnav.uwb`), IMU measurement models and vector
triads (:mod:`uwbnav.attitude`), the stochastic complementary filter
(:mod:`uwbnav.navfilter`), the truth simulator (:mod:`uwbnav.sim`), and the
experiment harness and CLI (:mod:`uwbnav.harness`, :mod:`uwbnav.cli`).
"""

__version__ = "0.1.0"
