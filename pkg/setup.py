#!/usr/bin/env python
from setuptools import setup, find_packages

project_name = "spice"

setup(
    name=project_name,
    version="0.1.0",
    packages=find_packages(exclude=("tests",)),
    install_requires=[
        'numpy>=1.21',
        'scipy>=1.7.1',
        'networkx>=2.4',
        'pandas>=1.3',
        'pyyaml>=5.4',
        'click>=8.0',
        'tqdm>=4.60',
        'arviz>=0.12'
    ],
    entry_points={
        'console_scripts': [
            'spice=spice.cli:main'
        ]
    }
)
