from setuptools import setup, find_packages
import re

install_requires = [
    "numpy >= 1.21.0",
    "scipy >= 1.9.0",
    "numba >= 0.56.0",
    "jsonschema >= 4.0.0",
    "tqdm",
]

extras_require = {"test": ["pytest"]}


def readme():
    with open("README.md") as f:
        return f.read()


with open("wallflip/__init__.py", "r") as f:
    __version__ = re.search(r'__version__\s*=\s*[\'"]([^\'"]*)[\'"]', f.read()).group(1)


setup(
    name="wallflip",
    version=__version__,
    description="Corner-flip interface above a hard wall: exact simulation, scaling observables and reference checks",
    long_description=readme(),
    long_description_content_type="text/markdown",
    license="MIT",
    packages=find_packages(exclude=["tests"]),
    install_requires=install_requires,
    extras_require=extras_require,
    entry_points={"console_scripts": ["wallflip=wallflip.cli:main"]},
    package_data={"wallflip": ["resources/*.json"]},
    zip_safe=False,
    include_package_data=True,
)
