"""
ニューラル学習パッケージ。

このパッケージは、numpy で書いた多層パーセプトロンの Q ネットワーク、
リプレイバッファ、入力エンコーディング、および Munchausen 形式の
Master OMD 学習器を提供します。
"""
