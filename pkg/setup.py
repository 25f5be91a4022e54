from setuptools import setup, find_packages

setup(
    name="gmls_nets",
    version="0.1.0",
    description="Meshfree operator learning on point clouds with generalized moving least squares layers.",
    packages=find_packages(exclude=("tests", "tests.*")),
    include_package_data=True,
    install_requires=["numpy>=1.26.4", "scipy>=1.11"],
    entry_points={"console_scripts": ["gmlsnet=gmls_nets.cli:main"]},
    classifiers=[
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "License :: OSI Approved :: MIT License",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.10",
)
