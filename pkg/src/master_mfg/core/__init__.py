"""
コアパッケージ。

このパッケージは、状態・行動空間、分布、方策、Q テーブルなど、
全モジュールで共有するドメイン型と基本数値演算を提供します。
"""
