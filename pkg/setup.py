import re
from os import path

from setuptools import find_packages, setup

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, "README.md"), encoding="utf-8") as f:
    long_description = f.read()

with open(path.join(here, "libreparam", "__init__.py"), encoding="utf-8") as f:
    version = re.search(r'^__version__ = "([^"]+)"', f.read(), re.MULTILINE).group(1)

setup(
    name="libreparam",
    version=version,
    description="Generalized reparameterization gradients for variational inference with gamma, beta, log-normal "
    "and Dirichlet families.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: GNU General Public License v2 or later (GPLv2+)",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    keywords="variational-inference reparameterization gradient-estimation",
    packages=find_packages(exclude=["tests"]),
    package_data={"libreparam.data": ["v1/*.json"]},
    python_requires=">=3.9",
    install_requires=["numpy>=1.20", "scipy>=1.7", "questionary"],
    extras_require={
        "lint": ["pylint", "black"],
        "test": ["coverage", "pytest", "pytest-cov"],
        "docs": ["sphinx_rtd_theme"],
        "changelog": ["towncrier>=22.8.0"],
    },
    entry_points={
        "console_scripts": [
            "libreparam=libreparam.cli:main",
        ],
    },
)
