#!/usr/bin/env python3
# 🌀 Eidosian Module Entry Point
"""
Entry point for ``python -m qsd_forge``.

Examples:
    .. code-block:: bash

        $ python -m qsd_forge eigen models/absorbed_ou.cfg --out run1
        $ python -m qsd_forge verdict models/absorbed_ou.cfg --strict
"""

import logging
import os
import sys

logging.basicConfig(
    level=logging.INFO if not os.environ.get("QSD_FORGE_DEBUG") else logging.DEBUG,
    format="%(asctime)s [%(levelname)8s] %(message)s (%(filename)s:%(lineno)s)",
)
logger = logging.getLogger("qsd_forge.__main__")

try:
    from .cli import main
    from .version import get_version_string

    logger.debug(f"🌀 QSD Forge v{get_version_string()} module entry point activated")
except ImportError as e:
    print(f"🌋 Critical initialization error: {str(e)}")
    print("💠 Ensure QSD Forge and its numerical dependencies are installed.")
    sys.exit(1)


def module_entry_point() -> int:
    """
    Run the CLI, mapping interrupts and unexpected failures to exit codes.

    Returns:
        int: Exit code (130 on interrupt, 1 on an unexpected exception)
    """
    try:
        return main()
    except KeyboardInterrupt:
        logger.info("⌨️  Interrupted by user")
        return 130
    except Exception as e:
        logger.error(f"💥 Execution failed: {str(e)}", exc_info=True)
        print(f"🔮 QSD Forge stopped unexpectedly: {str(e)}")
        print("📜 Run with QSD_FORGE_DEBUG=1 for verbose output")
        return 1


if __name__ == "__main__":
    print(f"🌀 QSD Forge v{get_version_string()} - killed diffusions and their quasistationary laws")
    sys.exit(module_entry_point())
