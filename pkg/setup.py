import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="depthguard",
    version="0.1.0",
    description="Adversarial attacks on monocular depth networks and saliency-mask defenses",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="Apache 2.0",
    include_package_data=True,
    entry_points={
        "console_scripts": [
            "depthguard=depthguard.cli:app",
        ]
    },
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
    install_requires=[
        "loguru",
        "numpy",
        "pandas",
        "Pillow",
        "rich",
        "tqdm",
        "typer",
    ],
)
