"""
异常定义

命令行根据异常类型决定退出码：配置错误返回1，数据错误返回2。
"""


class NNGramsError(Exception):
    """NN-grams 工具包所有异常的基类"""


class ConfigError(NNGramsError, ValueError):
    """配置或参数校验失败"""


class DataError(NNGramsError, ValueError):
    """输入数据无法读取或格式错误"""


class LatticeError(DataError):
    """词格结构错误（环、悬空节点、缺少起止节点等）"""


class NumericalError(NNGramsError, ArithmeticError):
    """梯度或参数出现非有限值"""
