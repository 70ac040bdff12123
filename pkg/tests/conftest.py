import pytest

from app.services import corpus


@pytest.fixture(scope="session")
def ex1():
    return corpus.example1()


@pytest.fixture(scope="session")
def ex2():
    return corpus.example2()


@pytest.fixture(scope="session")
def ex3():
    return corpus.example3()


@pytest.fixture(scope="session")
def zeno():
    return corpus.zeno_linear(p=0.5)
