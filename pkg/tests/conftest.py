import pytest

from rootdrill import parse_snapshot

# Two-attribute example used throughout the docs: one province dropped to half
# of its forecast while everything else tracks closely.
PROVINCE_CSV = """\
Province,ISP,real,predict
Beijing,China Mobile,5,10
Beijing,China Unicom,10,20
Shanghai,China Unicom,30,31
Guangdong,China Mobile,10,9.8
Zhejiang,China Unicom,2,2
Guangdong,China Unicom,200,210
Shanxi,China Unicom,20,22
Jiangsu,China Unicom,200,203
Tianjin,China Mobile,41,43
"""


@pytest.fixture
def province_csv() -> str:
    return PROVINCE_CSV


@pytest.fixture
def province_snapshot():
    return parse_snapshot(PROVINCE_CSV)
