#!/usr/bin/env python3
# 🌀 Eidosian Quasistationary Toolkit - Package Setup
"""
QSD Forge - Package Setup

Compatibility shim for tools that still call ``setup.py`` directly;
pyproject.toml carries the same metadata.
"""

import re
from pathlib import Path

from setuptools import find_packages, setup

here = Path(__file__).parent

# Version components live in src/qsd_forge/version.py
version_source = (here / "src" / "qsd_forge" / "version.py").read_text(encoding="utf-8")
parts = {
    name: re.search(rf"^{name} = (.+)$", version_source, re.MULTILINE).group(1)  # type: ignore[union-attr]
    for name in ("VERSION_MAJOR", "VERSION_MINOR", "VERSION_PATCH")
}
version = ".".join(parts[name] for name in ("VERSION_MAJOR", "VERSION_MINOR", "VERSION_PATCH"))

readme_file = here / "README.md"
long_description = readme_file.read_text(encoding="utf-8") if readme_file.exists() else ""

install_requires = [
    "numpy>=1.24.0",
    "scipy>=1.10.0",
    "sympy>=1.12",
    "pyyaml>=6.0.1",
    "colorama>=0.4.6",
]

extras_require = {
    "dev": [
        "pytest>=7.0.0",
        "pytest-cov>=3.0.0",
        "hypothesis>=6.80.0",
        "mpmath>=1.3.0",
        "black>=23.0.0",
        "isort>=5.10.0",
        "mypy>=1.0.0",
        "flake8>=6.0.0",
        "types-PyYAML>=6.0.12",
    ],
    "docs": [
        "sphinx>=8.2.3",
        "furo>=2024.8.6",
        "myst-parser>=4.0.1",
        "sphinx-autodoc-typehints>=3.1.0",
    ],
}

if __name__ == "__main__":
    setup(
        name="qsd_forge",
        version=version,
        description="Quasistationary distributions and survival dichotomies for killed one-dimensional diffusions",
        long_description=long_description,
        long_description_content_type="text/markdown",
        author="Lloyd Handyside",
        author_email="ace1928@gmail.com",
        packages=find_packages(where="src", include=["qsd_forge", "qsd_forge.*"]),
        package_dir={"": "src"},
        package_data={"qsd_forge": ["py.typed"]},
        classifiers=[
            "Development Status :: 4 - Beta",
            "Intended Audience :: Science/Research",
            "License :: OSI Approved :: MIT License",
            "Programming Language :: Python :: 3",
            "Topic :: Scientific/Engineering :: Mathematics",
        ],
        python_requires=">=3.9",
        install_requires=install_requires,
        extras_require=extras_require,
        entry_points={
            "console_scripts": [
                "qsd-forge=qsd_forge:main",
            ],
        },
        include_package_data=True,
        zip_safe=False,
    )
