"""
厳密評価パッケージ。

このパッケージは、固定した平均場フローに対する動的計画法
(方策評価・最適応答・期待収益)と、exploitability の厳密計算を提供します。
"""
