from setuptools import setup, find_packages

setup(
    name = "deformlearn",
    version = "0.1",
    packages = find_packages(exclude=['tests', 'tests.*']),

    install_requires = [
        'numpy',
        'scipy',
        'structlog',
        'colorlog',
        'click',
        'pyinstrument',
    ],

    package_data = {
        '': ['*.json'],
    },

    entry_points = {
        'console_scripts': ['deformlearn = deformlearn.cli:main'],
    },

    author = "deformlearn developers",
    description = "Deform-and-learn fitting of human body shape and pose",
    license = "AGPLv3",
    keywords = "body model registration skinning pose prior",
)
