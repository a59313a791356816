import sys
from setuptools import setup, find_packages

if len(set(('test', 'easy_install')).intersection(sys.argv)) > 0:
    import setuptools

tests_require = ["pytest>=3.3.0"]

# single-source the version from the package
VERSION = {}
with open('interferography/_version.py') as fobj:
    exec(fobj.read(), VERSION)

setup(
    name="interferography",
    version=VERSION['__version__'],
    description="quantum state reconstruction from single-shot "
                "interferograms",
    packages=find_packages(),
    include_package_data=True,
    package_data={'interferography': ['tests/specs/*.json']},
    install_requires=[
        'numpy>=1.17',
        'scipy>=1.9',
        'pandas>=1.0',
        'matplotlib>=3.1',
    ],
    tests_require=tests_require,
    extras_require={'tests': tests_require},
    entry_points={
        'console_scripts': [
            'interferography=interferography.cli:main',
        ],
    },
    python_requires='>=3.7',
    license='MIT',
    classifiers=[
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.7',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Topic :: Scientific/Engineering :: Physics',
    ]
)
