from setuptools import setup, find_packages

setup(
    name="skilllab",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    install_requires=[
        "numpy>=1.24.0",
        "pandas>=2.0.0",
        "scipy>=1.10.0",
        "statsmodels>=0.14.0",
        "matplotlib>=3.7.0",
        "seaborn>=0.12.0",
        "tabulate>=0.8.10",
        "openpyxl>=3.0.0",
        "tqdm>=4.65.0",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        'console_scripts': [
            'skilllab=skilllab.cli:main',
        ],
    },
    author="Tomitschek",
    description="Desk-scale bimanual skill recomposition: simulator, policies, training and evaluation",
)
