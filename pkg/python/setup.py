#!/usr/bin/env python
##########################################################################
# Copyright (c) 2024 TopoAlign developers                                #
# This program is free software under the terms of the MIT license.      #
##########################################################################

from distutils.core import setup

import setuptools  # noqa: F401 - required for command bdist_wheel

version = "1.0.0"

with open("VERSION", "w") as fp:
    fp.write(version)

with open("README.md", "r") as fp:
    readme = fp.read()

# PyPI classifiers: https://pypi.org/classifiers/
setup(
    name="TopoAlign",
    version=version,
    description="Cross-modal translation from music features to text "
    + "with group topology preservation.",
    long_description=readme,
    long_description_content_type="text/markdown",
    author="TopoAlign developers",
    packages=[
        "topoalign",
        "topoalign.tests",
        "topoalign.jsonschema",
    ],
    package_data={"topoalign": ["jsonschema/*"]},
    keywords=["Cross-Modal Translation", "Representation Learning",
              "Music Description", "BLEU"],
    license="MIT License",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    install_requires=["numpy", "jsonschema[format-nongpl]", "packaging",
                      "loguru", "click"],
    entry_points={"console_scripts": ["topoalign = topoalign.cli:cli"]},
)
