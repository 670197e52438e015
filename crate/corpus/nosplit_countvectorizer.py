import pandas as pd
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.cluster import KMeans

journalsFinal = pd.read_csv("journals.csv")
wordsVectorizer = CountVectorizer().fit(journalsFinal['text'])
wordsVector = wordsVectorizer.transform(journalsFinal['text'])
km = KMeans(n_clusters=5)
km.fit(wordsVector)
