"""
Core package for bsmcert

This package contains the numerical library shared by the command-line
application (bsm_certify.py) and the test suite: linear algebra, states and
measurements, channels, network simulation and certification.
"""
