#!/usr/bin/env python3

from setuptools import setup


with open('pychaos/VERSION', 'r') as _f:
    __version__ = _f.read().strip()

setup(
    name='pychaos',
    version=__version__,
    description='Propagation of chaos experiments for mean-field interacting particle systems',
    license='MIT License',
    classifiers=[
        'Intended Audience :: Science/Research',
        'Programming Language :: Python',
        'Topic :: Scientific/Engineering :: Mathematics'
    ],
    packages=['pychaos'],
    package_data={'pychaos': ['VERSION']},
    python_requires='>=3.10',
    install_requires=['numpy>=1.25', 'scipy>=1.10', 'matplotlib',
                      'tomli; python_version < "3.11"'],
    entry_points={'console_scripts': ['pychaos=pychaos.cli:main']},
    test_suite='test.runtests',
    zip_safe=False
)
