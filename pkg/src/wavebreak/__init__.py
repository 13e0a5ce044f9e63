"""Wave-breaking thresholds for Whitham-type equations.

``threshold`` holds the closed-form breaking region, ``ode`` the reduced
extremum dynamics, ``whitham`` the periodic pseudo-spectral solver and
``cli`` the command-line front end.
"""
__version__ = "0.1.0"
