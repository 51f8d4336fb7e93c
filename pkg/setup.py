from setuptools import setup, find_packages

# This setup.py file exists for compatibility with legacy build systems
# All configuration is done in pyproject.toml
setup(
    name="wrsearch",
    version="0.1.0",
    packages=find_packages(include=["wrsearch*"]),
    install_requires=[
        "numpy>=1.25",
        "pyyaml>=6.0",
    ],
    description="Weighted random search for hyperparameter optimization",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    entry_points={"console_scripts": ["wrsearch=wrsearch.cli:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
)
