#!/usr/bin/env python

# Copyright 2024 The bpre Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import re
from os import path
from setuptools import setup

HERE = path.dirname(path.abspath(__file__))


def get_meta(name):
    # read without importing, the package needs numpy at import time
    with open(path.join(HERE, 'bpre', '__init__.py'), encoding='utf8') as fp:
        return re.search(r'^__{}__\s*=\s*"([^"]+)"'.format(name), fp.read(), re.M).group(1)


def get_long_description():
    with open(path.join(HERE, 'README.md'), encoding='utf8') as fp:
        return fp.read()


setup(
    name='bpre',
    author=get_meta('author'),
    version=get_meta('version'),
    license=get_meta('license'),
    description='Upper large deviations of branching processes in random environment',
    long_description=get_long_description(),
    long_description_content_type='text/markdown',
    python_requires='>=3.8',
    packages=['bpre'],
    install_requires=[
        'numpy>=1.20',
        'scipy>=1.6',
        'pyyaml>=5.1',
        'matplotlib>=3.3',
    ],
    extras_require={
        'test': ['pytest', 'pytest-console-scripts'],
    },
    classifiers=[
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Operating System :: OS Independent',
        'Environment :: Console',
        'License :: OSI Approved :: Apache Software License',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Utilities'
    ],
    entry_points={
        'console_scripts': [
            'pybpre = bpre.__main__:main'
        ],
    }
)
