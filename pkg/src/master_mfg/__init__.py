"""
master-mfg パッケージ。

このパッケージは、有限ホライズン平均場ゲームのマスター方策(集団依存ナッシュ均衡方策)を
計算・学習し、厳密な動的計画法による exploitability で評価する実験環境を提供します。
"""

__version__ = '0.1.0'
