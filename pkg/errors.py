# -*- coding: utf-8 -*-
"""
洛伦兹过程实验台异常定义
"""


class LorentzLabError(Exception):
    """所有实验台异常的基类"""


class ConfigError(LorentzLabError):
    """配置文件解析或校验失败"""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class OverlappingObstacles(LorentzLabError):
    """两个障碍物（含格点平移）的闭包相交"""

    def __init__(self, i, j, translate):
        self.i = i
        self.j = j
        self.translate = tuple(translate)
        super().__init__(f"障碍物 {i} 与障碍物 {j} 平移 {self.translate} 后相交")


class InfiniteHorizon(LorentzLabError):
    """存在无限自由飞行的走廊"""

    def __init__(self, direction, corridor_width):
        self.direction = tuple(direction)
        self.corridor_width = float(corridor_width)
        super().__init__(
            f"方向 {self.direction} 存在宽度 {self.corridor_width:.6g} 的走廊，视界无限"
        )


class NoHitWithinHorizon(LorentzLabError):
    """搜索窗口内没有找到下一次碰撞（视界校验与动力学不一致）"""


class HorizonBoundExceeded(NoHitWithinHorizon):
    """自由飞行超过了 τ_max_bound"""

    def __init__(self, flight, bound):
        self.flight = float(flight)
        self.bound = float(bound)
        super().__init__(f"自由飞行 {self.flight:.6g} 超过上界 {self.bound:.6g}，运行中止")


class TimeBeyondTrajectory(LorentzLabError):
    """请求的时间超过了轨道总时长"""

    def __init__(self, t, duration):
        self.t = float(t)
        self.duration = float(duration)
        super().__init__(f"时间 {self.t:.6g} 超过轨道时长 {self.duration:.6g}")


class CellSizeNonPositive(LorentzLabError):
    """网格单元尺寸必须为正"""


class DegenerateCovariance(LorentzLabError):
    """协方差估计不是正定矩阵"""

    def __init__(self, matrix):
        self.matrix = matrix
        super().__init__(f"Σ² 估计非正定: {matrix!r}")


class ToleranceNotMet(LorentzLabError):
    """数值积分没有达到要求的精度"""

    def __init__(self, achieved, requested):
        self.achieved = float(achieved)
        self.requested = float(requested)
        super().__init__(f"积分误差 {self.achieved:.3g} 未达到要求 {self.requested:.3g}")


class NegativeBracket(LorentzLabError):
    """方差常数中的括号项 1+2J-π²/6 不为正"""

    def __init__(self, bracket):
        self.bracket = float(bracket)
        super().__init__(f"1+2J-π²/6 = {self.bracket:.6g} ≤ 0")


class BudgetExceeded(LorentzLabError):
    """超出时间预算，已写入检查点"""

    def __init__(self, checkpoint_path):
        self.checkpoint_path = checkpoint_path
        super().__init__(f"超出时间预算，检查点已保存到 {checkpoint_path}")


class CheckpointMismatch(LorentzLabError):
    """检查点与当前配置不匹配"""
