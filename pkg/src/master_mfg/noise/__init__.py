"""
共通ノイズパッケージ。

このパッケージは、母集団全体に作用する共通ノイズ過程と、
その履歴の段階的開示(ゼロ埋め)による観測エンコーディングを提供します。
"""
