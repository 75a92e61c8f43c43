"""
ユーティリティパッケージ。

このパッケージは、ロギング、CSV 出力、プロットなどの共通機能を提供します。
"""
