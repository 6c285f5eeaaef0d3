"""cblpipe: a portable COBOL CI/CD pipeline engine.

All CI-platform specifics are confined to :mod:`cblpipe.platform`; the
remaining modules (shell execution, copybook expansion, the simulated
mainframe client, the stage controller, container recipe checks and the
benchmark harness) are platform-neutral.
"""

__version__ = "0.1.0"
