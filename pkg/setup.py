#!/usr/bin/env python

from setuptools import setup

with open("README.md", "rt") as fh:
    long_description = fh.read()

dependencies = [
    "numpy>=1.21",
    "scipy>=1.7",
    "scikit-learn>=1.0",
]

dev_dependencies = [
    "hypothesis>=6.0",
    "pytest",
]

setup(
    name="polcom",
    packages=["polcom",],
    python_requires=">=3.8",
    description="Policy committees for multi-task MDPs via epsilon parameter covers",
    long_description=long_description,
    long_description_content_type="text/markdown",
    install_requires=dependencies,
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "License :: OSI Approved :: Apache Software License",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    extras_require=dict(dev=dev_dependencies,),
    entry_points={
        "console_scripts": [
            "polcom = polcom.cmds:main",
        ],
    },
)
