"""
平均場パッケージ。

このパッケージは、方策の下での集団分布の前進伝播(厳密・経験的)を提供します。
"""
