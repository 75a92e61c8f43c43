"""
環境パッケージ。

このパッケージは、探索(1 部屋・4 部屋)、ビーチバー、線形二次 (LQ) の
有限平均場ゲーム環境と、初期分布集合、アドホックチーム合流を提供します。
"""
